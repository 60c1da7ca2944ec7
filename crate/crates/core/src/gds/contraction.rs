//! Sufficient condition for minimality: strictly contracting maps whose ranges cover the space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{GuidedSystem, StateSpace, VALIDATION_POINTS};
use crate::numeric::merge_intervals;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEvidence {
    /// Largest observed ratio d(δᵢx, δᵢy)/d(x, y) over all maps and sampled pairs.
    pub lipschitz_estimate: f64,
    /// Image interval of every map.
    pub ranges: Vec<(f64, f64)>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionRefusal {
    /// `guided`, `space`, `contraction` or `range-cover`.
    pub hypothesis: &'static str,
    pub detail: String,
    pub witness: Vec<f64>,
}

/// Certificate or refusal for the contraction route to minimality.
///
/// The route is only available to unguided systems: with a nonempty Λᵢ the
/// covering argument no longer applies.
pub fn check_contraction_minimality(
    sys: &GuidedSystem,
    samples: usize,
    seed: u64,
) -> Result<ContractionEvidence, ContractionRefusal> {
    let StateSpace::Interval { a, b } = sys.space else {
        // Circle self-maps cannot cover the circle while contracting; graphs are discrete.
        return Err(ContractionRefusal {
            hypothesis: "space",
            detail: "the contraction route needs an interval state space".into(),
            witness: vec![],
        });
    };
    if !sys.all_guiding_empty() {
        return Err(ContractionRefusal {
            hypothesis: "guided",
            detail: "guiding sets are nonempty".into(),
            witness: vec![],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (i, map) in sys.generators.iter().enumerate() {
        for _ in 0..samples {
            let x: f64 = rng.gen_range(a..=b);
            let y: f64 = rng.gen_range(a..=b);
            if x == y {
                continue;
            }
            let ratio = (map.eval(x) - map.eval(y)).abs() / (x - y).abs();
            worst = worst.max(ratio);
            if !(ratio < 1.0) {
                return Err(ContractionRefusal {
                    hypothesis: "contraction",
                    detail: format!("generator {i} does not contract (ratio {ratio})"),
                    witness: vec![x, y],
                });
            }
        }
        if monotone(sys, i) {
            let secant = (map.eval(b) - map.eval(a)).abs() / (b - a);
            worst = worst.max(secant);
            if !(secant < 1.0) {
                return Err(ContractionRefusal {
                    hypothesis: "contraction",
                    detail: format!("generator {i} has endpoint Lipschitz estimate {secant}"),
                    witness: vec![a, b],
                });
            }
        }
    }
    let grid = sys.space.sample_points(VALIDATION_POINTS);
    let ranges: Vec<(f64, f64)> = sys
        .generators
        .iter()
        .map(|m| {
            grid.iter().map(|&x| m.eval(x)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        })
        .collect();
    let merged = merge_intervals(ranges.clone(), sys.tol.range);
    let first = merged[0];
    let gap = if first.0 > a + sys.tol.range {
        Some(a)
    } else if merged.len() > 1 {
        Some(first.1)
    } else if first.1 < b - sys.tol.range {
        Some(first.1)
    } else {
        None
    };
    if let Some(x) = gap {
        return Err(ContractionRefusal {
            hypothesis: "range-cover",
            detail: format!("the union of ranges misses points near {x}"),
            witness: vec![x],
        });
    }
    Ok(ContractionEvidence {
        lipschitz_estimate: worst,
        ranges,
        samples,
    })
}

fn monotone(sys: &GuidedSystem, i: usize) -> bool {
    let grid = sys.space.sample_points(200);
    let signs: Vec<f64> = grid
        .iter()
        .filter_map(|&x| sys.generators[i].derivative(x))
        .filter(|d| d.abs() > 1e-14)
        .map(f64::signum)
        .collect();
    signs.len() > 0 && signs.iter().all(|&s| s == signs[0])
}
