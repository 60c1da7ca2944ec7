//! Generalized P-configurations: N nondecreasing maps of I = [a₀, a_N] whose
//! derivatives sum to 1 and which send I onto consecutive anchor intervals
//! [aᵢ₋₁, aᵢ]. The guiding set of δᵢ is the zero set of δᵢ′.

mod ivp;
mod probe;

use std::fmt;

use serde::Serialize;

use crate::exprlang::DomainError;
use crate::funceq::FunceqError;
use crate::gds::{GdsError, GeneratorMap, GuidedSystem, GuidingSet, StateSpace, Tolerances, VALIDATION_POINTS};
use crate::numeric::{bisect, golden_min, linspace, merge_intervals};

pub use ivp::{solve_ivp, HData, IvpDiagnostics, IvpProblem, CONDITION_CAP, DENSE_LIMIT};
pub use probe::{probe_pconf_minimality, PconfProbeReport};

/// Derivative values at or below this count as zero when extracting Λᵢ.
pub const DERIVATIVE_TOL: f64 = 1e-9;
/// Scan resolution for the zero sets of δᵢ′.
const ROOT_SCAN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PconfCondition {
    /// Σ δᵢ′ = 1
    SumRule,
    /// δᵢ′ ≥ 0
    Monotone,
    /// δᵢ(a₀) = aᵢ₋₁
    LeftEndpoint,
    /// δᵢ(a_N) = aᵢ
    RightEndpoint,
    /// δᵢ(I) ⊆ [aᵢ₋₁, aᵢ]
    Range,
}

impl fmt::Display for PconfCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PconfCondition::SumRule => "sum of derivatives = 1",
            PconfCondition::Monotone => "derivative >= 0",
            PconfCondition::LeftEndpoint => "delta_i(a_0) = a_(i-1)",
            PconfCondition::RightEndpoint => "delta_i(a_N) = a_i",
            PconfCondition::Range => "delta_i(I) inside [a_(i-1), a_i]",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PconfError {
    #[error("{0}")]
    Shape(String),
    #[error("P-configuration violated: {condition} (map {gen:?}) at t = {x}, value {value}")]
    Violation {
        condition: PconfCondition,
        gen: Option<usize>,
        x: f64,
        value: f64,
    },
    #[error("map {0} has no derivative")]
    NoDerivative(usize),
    #[error("h(a_0) = {left} but h(a_N) = {right}")]
    DataMismatch { left: f64, right: f64 },
    #[error("collocation system is ill-conditioned (estimate {estimate:e}, cap {cap:e})")]
    IllConditioned { estimate: f64, cap: f64 },
    #[error("the iterative least-squares solve stalled after {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Gds(#[from] GdsError),
    #[error(transparent)]
    Funceq(#[from] FunceqError),
}

/// A validated generalized P-configuration with its derived guiding sets.
#[derive(Debug, Clone)]
pub struct PConfiguration {
    pub anchors: Vec<f64>,
    /// Interval space, generators δᵢ and guiding sets Λᵢ = {δᵢ′ = 0}.
    pub system: GuidedSystem,
    pub tol: f64,
}

impl PConfiguration {
    pub fn interval(&self) -> (f64, f64) {
        (self.anchors[0], *self.anchors.last().unwrap())
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    pub fn maps(&self) -> &[GeneratorMap] {
        &self.system.generators
    }

    pub fn guiding(&self) -> &[GuidingSet] {
        &self.system.guiding
    }

    /// C with Σ δᵢ(t) = t + C.
    pub fn shift(&self) -> f64 {
        let a0 = self.anchors[0];
        self.maps().iter().map(|m| m.eval(a0)).sum::<f64>() - a0
    }
}

fn derivative_of(map: &GeneratorMap, gen: usize, t: f64) -> Result<f64, PconfError> {
    map.derivative(t).ok_or(PconfError::NoDerivative(gen))
}

/// Checks the P-configuration conditions on a validation grid and derives Λᵢ.
pub fn validate_pconfiguration(
    maps: Vec<GeneratorMap>,
    anchors: Vec<f64>,
    tol: f64,
) -> Result<PConfiguration, PconfError> {
    let n = maps.len();
    if n < 2 {
        return Err(PconfError::Shape("a P-configuration needs at least two maps".into()));
    }
    if anchors.len() != n + 1 {
        return Err(PconfError::Shape(format!("{n} maps need {} anchors, got {}", n + 1, anchors.len())));
    }
    if anchors.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PconfError::Shape("anchors must be strictly increasing".into()));
    }
    let (a0, an) = (anchors[0], anchors[n]);
    let grid = linspace(a0, an, VALIDATION_POINTS);
    let violation = |condition, gen, x, value| PconfError::Violation {
        condition,
        gen,
        x,
        value,
    };

    for &t in &grid {
        let mut sum = 0.0;
        for (i, m) in maps.iter().enumerate() {
            let d = derivative_of(m, i, t)?;
            if d < -tol {
                return Err(violation(PconfCondition::Monotone, Some(i), t, d));
            }
            sum += d;
        }
        if (sum - 1.0).abs() > tol {
            return Err(violation(PconfCondition::SumRule, None, t, sum));
        }
    }
    for (i, m) in maps.iter().enumerate() {
        let right = m.eval(an);
        if !((right - anchors[i + 1]).abs() <= tol) {
            return Err(violation(PconfCondition::RightEndpoint, Some(i), an, right));
        }
        let left = m.eval(a0);
        if !((left - anchors[i]).abs() <= tol) {
            return Err(violation(PconfCondition::LeftEndpoint, Some(i), a0, left));
        }
    }
    for &t in &grid {
        for (i, m) in maps.iter().enumerate() {
            let y = m.eval(t);
            if !(y >= anchors[i] - tol && y <= anchors[i + 1] + tol) {
                return Err(violation(PconfCondition::Range, Some(i), t, y));
            }
        }
    }

    let guiding = guiding_sets(&maps, a0, an);
    let tolerances = Tolerances {
        range: tol.max(Tolerances::default().range),
        ..Tolerances::default()
    };
    let system = GuidedSystem::new(StateSpace::Interval { a: a0, b: an }, maps, guiding, tolerances)?;
    Ok(PConfiguration { anchors, system, tol })
}

/// Λᵢ = {t ∈ I | δᵢ′(t) = 0} for every map of the configuration.
pub fn extract_guiding_sets(pconf: &PConfiguration) -> Vec<GuidingSet> {
    let (a, b) = pconf.interval();
    guiding_sets(pconf.maps(), a, b)
}

fn guiding_sets(maps: &[GeneratorMap], a: f64, b: f64) -> Vec<GuidingSet> {
    maps.iter()
        .map(|m| GuidingSet::from_intervals(zero_set(|t| m.derivative(t).unwrap_or(f64::NAN), a, b, DERIVATIVE_TOL)))
        .collect()
}

/// Closed intervals where |d| ≤ tol: sign-change roots, tangential roots at
/// grid minima, and runs of small grid values, each widened to the full
/// sub-tolerance interval.
pub(crate) fn zero_set<D: Fn(f64) -> f64>(d: D, lo: f64, hi: f64, tol: f64) -> Vec<(f64, f64)> {
    let ts = linspace(lo, hi, ROOT_SCAN);
    let v: Vec<f64> = ts.iter().map(|&t| d(t)).collect();
    let small = |j: usize| v[j].abs() <= tol;
    let excess = |t: f64| d(t).abs() - tol;
    // Extends a sub-tolerance point x to where |d| crosses tol, searching
    // no further than the bracketing grid nodes.
    let widen = |x: f64, left: f64, right: f64| -> (f64, f64) {
        let l = if excess(left) > 0.0 {
            bisect(excess, left, x, 1e-15).unwrap_or(x)
        } else {
            left
        };
        let r = if excess(right) > 0.0 {
            bisect(excess, x, right, 1e-15).unwrap_or(x)
        } else {
            right
        };
        (l.min(x), r.max(x))
    };

    let last = ts.len() - 1;
    let mut out = Vec::new();
    let mut j = 0;
    while j <= last {
        if small(j) {
            let start = j;
            while j < last && small(j + 1) {
                j += 1;
            }
            let left = if start > 0 { ts[start - 1] } else { ts[0] };
            let right = if j < last { ts[j + 1] } else { ts[last] };
            let (l, _) = widen(ts[start], left, ts[start]);
            let (_, r) = widen(ts[j], ts[j], right);
            out.push((l, r));
        }
        j += 1;
    }
    for j in 0..last {
        if small(j) || small(j + 1) {
            continue;
        }
        if v[j] * v[j + 1] < 0.0 {
            if let Some(r) = bisect(&d, ts[j], ts[j + 1], 1e-15) {
                out.push(widen(r, ts[j], ts[j + 1]));
            }
        }
    }
    for j in 1..last {
        if small(j) || v[j].abs() > v[j - 1].abs() || v[j].abs() > v[j + 1].abs() {
            continue;
        }
        let x = golden_min(|t| d(t).abs(), ts[j - 1], ts[j + 1], 1e-13);
        if d(x).abs() <= tol {
            out.push(widen(x, ts[j - 1], ts[j + 1]));
        }
    }
    merge_intervals(out, 0.0)
}
