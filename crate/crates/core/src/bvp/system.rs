use serde::Serialize;

use super::{BoundaryProblem, BvpError, Curve};
use crate::gds::{
    check_contraction_minimality, find_guided_cycles, verify_conjugacy, ConjugacyReport, ContractionEvidence,
    GeneratorMap, GuidedSystem, GuidingSet, MinimalityVerdict, Orbit, StateSpace, Tolerances,
};
use crate::numeric::bisect;
use crate::pconf::{probe_pconf_minimality, validate_pconfiguration, zero_set, PConfiguration, PconfProbeReport, DERIVATIVE_TOL};

/// Generator slots: the P-configuration lists its maps in anchor order, so
/// δ₂ (onto [−m, 0]) comes first and δ₁ (onto [0, n]) second.
pub(crate) const D2: usize = 0;
pub(crate) const D1: usize = 1;

const CONJUGACY_SAMPLES: usize = 100;
const CONJUGACY_TOL: f64 = 1e-9;
const CYCLE_LEN: usize = 6;
const ESCAPE_WORDS: usize = 4;
const ESCAPE_STEPS: usize = 100_000;

/// (Γ, ζ, Ω) in the z-parameter together with its ω-image (I, δ, Λ).
#[derive(Debug, Clone)]
pub struct BoundarySystem {
    pub problem: BoundaryProblem,
    /// ζ₂ = π₃∘π₂ and ζ₁ = π₃∘π₁ on z ∈ [−1, 1], guided by Ω₂ and Ω₁.
    pub zeta: GuidedSystem,
    /// δ₂, δ₁ on [−m, n] with anchors (−m, 0, n).
    pub pconf: PConfiguration,
    pub omega: GeneratorMap,
    pub omega_inv: GeneratorMap,
    /// Parameter of O′ = ζ₁(A₂) = ζ₂(A₁), where ω vanishes.
    pub z0: f64,
    pub conjugacy: ConjugacyReport,
    /// Guiding-set points at the corners A₂ (z = −1) or A₁ (z = 1), as (i, z)
    /// for a point of Ωᵢ: tangency to an axis direction at an end of Γ.
    pub corner_tangencies: Vec<(usize, f64)>,
}

impl BoundarySystem {
    pub fn interval(&self) -> (f64, f64) {
        self.pconf.interval()
    }

    /// δ₁(t) = n·α₁(z(t)).
    pub fn delta1(&self, t: f64) -> f64 {
        self.pconf.maps()[D1].eval(t)
    }

    /// δ₂(t) = −m·α₂(z(t)).
    pub fn delta2(&self, t: f64) -> f64 {
        self.pconf.maps()[D2].eval(t)
    }

    pub fn delta1_prime(&self, t: f64) -> f64 {
        self.pconf.maps()[D1].derivative(t).unwrap_or(f64::NAN)
    }

    pub fn delta2_prime(&self, t: f64) -> f64 {
        self.pconf.maps()[D2].derivative(t).unwrap_or(f64::NAN)
    }

    /// Λ₁ and Λ₂.
    pub fn lambda(&self) -> [&GuidingSet; 2] {
        [&self.pconf.guiding()[D1], &self.pconf.guiding()[D2]]
    }

    /// Ω₁ and Ω₂ in the z-parameter.
    pub fn omega_sets(&self) -> [&GuidingSet; 2] {
        [&self.zeta.guiding[D1], &self.zeta.guiding[D2]]
    }
}

fn interval_map(curve: &Curve, scale: f64, second: bool) -> GeneratorMap {
    let (c1, c2) = (curve.clone(), curve.clone());
    let coord = move |c: &Curve, z: f64| if second { c.alpha2.eval_or_nan(z) } else { c.alpha1.eval_or_nan(z) };
    GeneratorMap::custom(
        move |t| scale * coord(&c1, c1.omega_inv(t)),
        move |t| {
            let q = c2.quotients(c2.omega_inv(t));
            if second {
                q.1
            } else {
                q.0
            }
        },
    )
}

fn curve_map(curve: &Curve, scale: f64, second: bool) -> GeneratorMap {
    let (c1, c2) = (curve.clone(), curve.clone());
    let coord = move |c: &Curve, z: f64| if second { c.alpha2.eval_or_nan(z) } else { c.alpha1.eval_or_nan(z) };
    let dcoord = move |c: &Curve, z: f64| if second { c.d_alpha2.eval_or_nan(z) } else { c.d_alpha1.eval_or_nan(z) };
    GeneratorMap::custom(
        move |z| c1.omega_inv(scale * coord(&c1, z)),
        move |z| {
            let image = c2.omega_inv(scale * coord(&c2, z));
            scale * dcoord(&c2, z) / c2.slope(image)
        },
    )
}

/// Builds ζ, Ω, the conjugation ω and the P-configuration δ, and checks that
/// ω intertwines (Γ, ζ, Ω) with (I, δ, Λ).
pub fn build_boundary_system(problem: &BoundaryProblem) -> Result<BoundarySystem, BvpError> {
    problem.check_slope()?;
    let c = &problem.curve;
    let (m, n) = (c.m, c.n);

    let maps = vec![interval_map(c, -m, true), interval_map(c, n, false)];
    let pconf = validate_pconfiguration(maps, vec![-m, 0.0, n], 1e-9)?;

    // Ωᵢ = {αᵢ′ = 0}, located through the same quotient as Λᵢ so that ω maps
    // one onto the other
    let omega_set = |k: usize| {
        let cc = c.clone();
        let q = move |z: f64| {
            let (a, b) = cc.quotients(z);
            if k == D1 {
                a
            } else {
                b
            }
        };
        GuidingSet::from_intervals(zero_set(q, -1.0, 1.0, DERIVATIVE_TOL))
    };
    let guiding = vec![omega_set(D2), omega_set(D1)];
    let zeta = GuidedSystem::new(
        StateSpace::Interval { a: -1.0, b: 1.0 },
        vec![curve_map(c, -m, true), curve_map(c, n, false)],
        guiding,
        Tolerances::default(),
    )?;

    let (co, ci) = (c.clone(), c.clone());
    let omega = GeneratorMap::custom(move |z| co.omega(z), move |_| f64::NAN);
    let omega_inv = GeneratorMap::custom(move |t| ci.omega_inv(t), move |_| f64::NAN);
    let conjugacy = verify_conjugacy(&zeta, &pconf.system, &omega, &omega_inv, CONJUGACY_SAMPLES, 17, CONJUGACY_TOL)?;
    if !conjugacy.passed {
        return Err(BvpError::Conjugacy(format!(
            "map defect {:e}, guiding defect {:e}, {} improper orbits",
            conjugacy.max_defect, conjugacy.guiding_defect, conjugacy.properness_violations
        )));
    }

    let mut corner_tangencies = Vec::new();
    for (paper, slot) in [(1, D1), (2, D2)] {
        for z in [-1.0, 1.0] {
            if zeta.guiding[slot].contains(&zeta.space, z, zeta.tol.lambda) {
                corner_tangencies.push((paper, z));
            }
        }
    }
    Ok(BoundarySystem {
        z0: c.omega_inv(0.0),
        problem: problem.clone(),
        zeta,
        pconf,
        omega,
        omega_inv,
        conjugacy,
        corner_tangencies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub t: f64,
    pub derivative: f64,
}

/// Fixed point of `map` on [lo, hi] by bisection on map(t) − t, with the
/// derivative there. Refuses when the derivative is 1 to within 1e-6, since
/// then uniqueness and attraction are not guaranteed.
pub fn fixed_point<F, D>(map: F, derivative: D, lo: f64, hi: f64) -> Result<FixedPoint, BvpError>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let g = |t: f64| map(t) - t;
    let t = if g(lo).abs() <= 1e-13 {
        lo
    } else if g(hi).abs() <= 1e-13 {
        hi
    } else {
        bisect(g, lo, hi, 1e-13).ok_or(BvpError::NoBracket { lo, hi })?
    };
    let d = derivative(t);
    if !((d - 1.0).abs() >= 1e-6) {
        return Err(BvpError::Inconclusive { t, derivative: d });
    }
    Ok(FixedPoint { t, derivative: d })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FixedPointOutcome {
    Found { t: f64, derivative: f64, in_lambda: bool },
    Inconclusive { t: f64, derivative: f64 },
    NoBracket,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionFixedPoint {
    /// `δ₁∘δ₂` or `δ₂∘δ₁`.
    pub map: &'static str,
    pub outcome: FixedPointOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolvabilityRoute {
    /// Every δᵢ contracts and Λ is empty.
    Contraction,
    /// Fixed points of δ₁∘δ₂, δ₂∘δ₁ under the segment hypotheses on Ω.
    FixedPoint,
    /// A Λ-proper, Λ-guided cycle.
    GuidedCycle,
    /// Every point of Λ₁ escapes along a proper orbit whose ζ₁-tail avoids Λ₁.
    Escape,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum SolvabilityVerdict {
    Solvable,
    NotSolvable { witness: Option<Orbit> },
    /// Graded evidence from the orbit-cloud probes.
    Evidence { probe: MinimalityVerdict },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvabilityReport {
    pub verdict: SolvabilityVerdict,
    pub route: SolvabilityRoute,
    pub certificate: Option<ContractionEvidence>,
    /// Λ₁ ⊂ (0, n) and Λ₂ ⊂ (−m, 0), i.e. Ω₁ in the open segment O′A₁ and
    /// Ω₂ in the open segment A₂O′.
    pub segment_hypotheses: bool,
    pub fixed_points: Vec<CompositionFixedPoint>,
    pub escape: Option<bool>,
    pub cycles: Vec<Orbit>,
    pub probe: Option<PconfProbeReport>,
}

impl SolvabilityReport {
    pub fn is_solvable(&self) -> bool {
        self.verdict == SolvabilityVerdict::Solvable
    }

    pub fn is_not_solvable(&self) -> bool {
        matches!(self.verdict, SolvabilityVerdict::NotSolvable { .. })
    }
}

fn composition_fixed_point(sys: &BoundarySystem, outer: usize, inner: usize) -> FixedPointOutcome {
    let maps = sys.pconf.maps();
    let (a, b) = sys.interval();
    let f = |t: f64| maps[outer].eval(maps[inner].eval(t));
    let df = |t: f64| {
        let s = maps[inner].eval(t);
        maps[inner].derivative(t).unwrap_or(f64::NAN) * maps[outer].derivative(s).unwrap_or(f64::NAN)
    };
    match fixed_point(f, df, a, b) {
        Ok(p) => FixedPointOutcome::Found {
            t: p.t,
            derivative: p.derivative,
            in_lambda: sys.pconf.system.in_guiding_union(p.t),
        },
        Err(BvpError::Inconclusive { t, derivative }) => FixedPointOutcome::Inconclusive { t, derivative },
        Err(_) => FixedPointOutcome::NoBracket,
    }
}

/// Hypotheses of the escape criterion: A₁ ∉ Ω and every point of Λ₁ starts a
/// proper orbit ending at a point whose ζ₁-iterates never meet Λ₁.
fn escape_holds(sys: &BoundarySystem) -> bool {
    let s = &sys.pconf.system;
    let (_, n) = sys.interval();
    if s.in_guiding_union(n) {
        return false;
    }
    let lambda1 = &s.guiding[D1];
    let top = lambda1.intervals.iter().map(|iv| iv.1).fold(f64::NEG_INFINITY, f64::max);
    // ζ₁-iterates increase to n (δ₁(t) − t = −δ₂(t) ≥ 0), so once past the
    // last point of Λ₁ they stay clear of it
    let tail_clear = |mut t: f64| {
        for _ in 0..ESCAPE_STEPS {
            if lambda1.contains(&s.space, t, s.tol.lambda) {
                return false;
            }
            if t > top + s.tol.lambda {
                return true;
            }
            t = s.step(D1, t);
        }
        false
    };
    let escapes = |p: f64| {
        let mut layer = vec![p];
        for _ in 0..ESCAPE_WORDS {
            let mut next = Vec::new();
            for &x in &layer {
                for i in s.allowed_generators(x) {
                    let y = s.step(i, x);
                    if tail_clear(y) {
                        return true;
                    }
                    next.push(y);
                }
            }
            layer = next;
        }
        false
    };
    lambda1.intervals.iter().all(|&(lo, hi)| {
        let mut pts = vec![lo, 0.5 * (lo + hi), hi];
        pts.dedup();
        pts.into_iter().all(escapes)
    })
}

/// Layered decision: contraction certificate, then the fixed points of
/// δ₁∘δ₂ and δ₂∘δ₁ under the segment hypotheses, then Λ-guided cycles, then
/// the escape criterion, and finally the orbit-cloud probes.
pub fn analyze_solvability(sys: &BoundarySystem, eps: f64, depth: usize) -> SolvabilityReport {
    let s = &sys.pconf.system;
    let (a, b) = sys.interval();
    let certificate = check_contraction_minimality(s, 2000, 7).ok();

    let within = |g: &GuidingSet, lo: f64, hi: f64| g.intervals.iter().all(|&(x, y)| x > lo && y < hi);
    let segment_hypotheses = within(&s.guiding[D1], 0.0, b) && within(&s.guiding[D2], a, 0.0);
    let fixed_points = if segment_hypotheses {
        vec![
            CompositionFixedPoint {
                map: "δ₁∘δ₂",
                outcome: composition_fixed_point(sys, D1, D2),
            },
            CompositionFixedPoint {
                map: "δ₂∘δ₁",
                outcome: composition_fixed_point(sys, D2, D1),
            },
        ]
    } else {
        Vec::new()
    };

    let mut report = SolvabilityReport {
        verdict: SolvabilityVerdict::Solvable,
        route: SolvabilityRoute::Contraction,
        certificate,
        segment_hypotheses,
        fixed_points,
        escape: None,
        cycles: Vec::new(),
        probe: None,
    };
    if report.certificate.is_some() {
        return report;
    }

    let found: Vec<(f64, bool)> = report
        .fixed_points
        .iter()
        .filter_map(|fp| match fp.outcome {
            FixedPointOutcome::Found { t, in_lambda, .. } => Some((t, in_lambda)),
            _ => None,
        })
        .collect();
    if found.iter().any(|&(_, inside)| !inside) {
        report.route = SolvabilityRoute::FixedPoint;
        return report;
    }
    if found.len() == 2 {
        // both fixed points are unique and lie in Λ: {p, δ₂(p)} is a guided cycle
        let p = found[0].0;
        let q = s.step(D2, p);
        report.route = SolvabilityRoute::FixedPoint;
        report.verdict = SolvabilityVerdict::NotSolvable {
            witness: Some(Orbit {
                points: vec![p, q, p],
                generators: vec![D2, D1],
            }),
        };
        return report;
    }

    report.cycles = find_guided_cycles(s, CYCLE_LEN).cycles;
    if let Some(c) = report.cycles.first() {
        report.route = SolvabilityRoute::GuidedCycle;
        report.verdict = SolvabilityVerdict::NotSolvable {
            witness: Some(c.clone()),
        };
        return report;
    }

    let escape = escape_holds(sys);
    report.escape = Some(escape);
    if escape {
        report.route = SolvabilityRoute::Escape;
        return report;
    }

    let probe = probe_pconf_minimality(&sys.pconf, eps, depth);
    report.route = SolvabilityRoute::Probe;
    report.verdict = SolvabilityVerdict::Evidence {
        probe: probe.verdict.clone(),
    };
    report.probe = Some(probe);
    report
}
