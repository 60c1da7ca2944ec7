use serde::Serialize;

use super::PConfiguration;
use crate::gds::{
    check_contraction_minimality, probe_minimality, probe_weak_attractor, ContractionEvidence, MinimalityVerdict,
    OrbitOptions, WeakAttractorVerdict,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PconfProbeReport {
    pub verdict: MinimalityVerdict,
    /// Raw verdict of the orbit-cloud minimality probe.
    pub minimality: MinimalityVerdict,
    pub weak_attractor: WeakAttractorVerdict,
    /// Interior point off Λ tested as a weak attractor.
    pub attractor_candidate: f64,
    pub certificate: Option<ContractionEvidence>,
    /// Whether the two probes agree (minimal ⇔ weak attractor off Λ).
    pub agree: bool,
    pub diagnostic: Option<String>,
}

/// An interior point off every guiding set, as close to the middle as possible.
fn candidate(pconf: &PConfiguration) -> f64 {
    let (a, b) = pconf.interval();
    let mid = 0.5 * (a + b);
    let sys = &pconf.system;
    let k = 1024;
    (0..k)
        .flat_map(|j| {
            let off = (b - a) * j as f64 / (2 * k) as f64;
            [mid + off, mid - off]
        })
        .find(|&t| !sys.in_guiding_union(t) && t > a && t < b)
        .unwrap_or(mid)
}

/// Minimality probe cross-checked against a weak-attractor probe: in a
/// P-configuration the system is Λ-minimal iff a Λ-weak attractor exists off Λ.
pub fn probe_pconf_minimality(pconf: &PConfiguration, eps: f64, depth: usize) -> PconfProbeReport {
    let sys = &pconf.system;
    let opts = OrbitOptions::default();
    let certificate = check_contraction_minimality(sys, 2000, 7).ok();
    let minimality = probe_minimality(sys, eps, depth, &opts);
    let x0 = candidate(pconf);
    let weak_attractor = probe_weak_attractor(sys, x0, eps, depth, &opts);

    let agree = matches!(
        (&minimality, &weak_attractor),
        (MinimalityVerdict::MinimalEvidence { .. }, WeakAttractorVerdict::Yes { .. })
            | (MinimalityVerdict::NotMinimal { .. }, WeakAttractorVerdict::No { .. })
            | (MinimalityVerdict::Inconclusive { .. }, WeakAttractorVerdict::Inconclusive { .. })
    );
    let worst = match &minimality {
        MinimalityVerdict::MinimalEvidence { coverage, .. } => *coverage,
        MinimalityVerdict::Inconclusive { worst_coverage, .. } => *worst_coverage,
        MinimalityVerdict::NotMinimal { .. } => 0.0,
    };
    let inconclusive = MinimalityVerdict::Inconclusive {
        eps,
        depth,
        worst_coverage: worst,
    };
    let (verdict, diagnostic) = if certificate.is_some() {
        if minimality.is_not_minimal() {
            (
                inconclusive,
                Some("contraction certificate issued but the orbit probe found a closed proper subset".to_string()),
            )
        } else {
            let diag = (!agree).then(|| format!("certificate overrides probe disagreement ({})", minimality.category()));
            (
                MinimalityVerdict::MinimalEvidence {
                    eps,
                    depth,
                    coverage: worst,
                },
                diag,
            )
        }
    } else if agree {
        (minimality.clone(), None)
    } else {
        (
            inconclusive,
            Some(format!(
                "minimality probe says {} but the weak-attractor probe at {x0} disagrees",
                minimality.category()
            )),
        )
    };
    PconfProbeReport {
        verdict,
        minimality,
        weak_attractor,
        attractor_candidate: x0,
        certificate,
        agree,
        diagnostic,
    }
}
