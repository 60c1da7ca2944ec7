//! Numerical check that a homeomorphism intertwines two guided systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{GdsError, GeneratorMap, GuidedSystem, StateSpace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyReport {
    /// max over generators and samples of d(φ(δᵢ(x)), γᵢ(φ(x))).
    pub max_defect: f64,
    /// max over generators of the Hausdorff distance between φ(Λᵢ) and Ωᵢ.
    pub guiding_defect: f64,
    /// Λ-proper orbits whose image is not Ω-proper.
    pub properness_violations: usize,
    pub orbits_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

const ORBITS: usize = 100;
const ORBIT_LEN: usize = 20;

fn random_point(space: &StateSpace, rng: &mut ChaCha8Rng) -> f64 {
    match *space {
        StateSpace::Interval { a, b } => rng.gen_range(a..=b),
        StateSpace::Circle { period } => rng.gen_range(0.0..period),
        StateSpace::Graph { nodes } => rng.gen_range(0..nodes) as f64,
    }
}

fn set_samples(intervals: &[(f64, f64)]) -> Vec<f64> {
    intervals
        .iter()
        .flat_map(|&(lo, hi)| {
            if hi > lo {
                (0..=16).map(|j| lo + (hi - lo) * j as f64 / 16.0).collect()
            } else {
                vec![lo]
            }
        })
        .collect()
}

/// Compares `a` against `b` through `phi`, with `phi_inv` its inverse.
pub fn verify_conjugacy(
    a: &GuidedSystem,
    b: &GuidedSystem,
    phi: &GeneratorMap,
    phi_inv: &GeneratorMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ConjugacyReport, GdsError> {
    if a.len() != b.len() {
        return Err(GdsError::Shape(format!(
            "systems have {} and {} generators",
            a.len(),
            b.len()
        )));
    }
    let to_b = |x: f64| b.space.normalize(phi.eval(x));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_defect = 0.0f64;
    for _ in 0..samples {
        let x = random_point(&a.space, &mut rng);
        let back = a.space.normalize(phi_inv.eval(to_b(x)));
        let defect = a.space.dist(back, x);
        if !(defect <= tol.max(1e-9)) {
            return Err(GdsError::NotInvertible { x, defect });
        }
        for i in 0..a.len() {
            let d = b.space.dist(to_b(a.step(i, x)), b.step(i, to_b(x)));
            max_defect = max_defect.max(if d.is_nan() { f64::INFINITY } else { d });
        }
    }

    let mut guiding_defect = 0.0f64;
    for (la, lb) in a.guiding.iter().zip(&b.guiding) {
        let image: Vec<f64> = set_samples(&la.intervals).into_iter().map(to_b).collect();
        let target = set_samples(&lb.intervals);
        let d = match (image.is_empty(), target.is_empty()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => f64::INFINITY,
            _ => {
                let forward = image.iter().map(|&p| lb.dist(&b.space, p)).fold(0.0, f64::max);
                let backward = target
                    .iter()
                    .map(|&q| image.iter().map(|&p| b.space.dist(p, q)).fold(f64::INFINITY, f64::min))
                    .fold(0.0, f64::max);
                forward.max(backward)
            }
        };
        guiding_defect = guiding_defect.max(d);
    }

    let mut violations = 0;
    for _ in 0..ORBITS {
        let mut x = random_point(&a.space, &mut rng);
        let mut ok = true;
        for _ in 0..ORBIT_LEN {
            let allowed = a.allowed_generators(x);
            if allowed.is_empty() {
                break;
            }
            let i = allowed[rng.gen_range(0..allowed.len())];
            if !b.is_allowed(i, to_b(x)) {
                ok = false;
            }
            x = a.step(i, x);
        }
        if !ok {
            violations += 1;
        }
    }

    Ok(ConjugacyReport {
        max_defect,
        guiding_defect,
        properness_violations: violations,
        orbits_checked: ORBITS,
        tol,
        passed: max_defect < tol && guiding_defect < tol && violations == 0,
    })
}
