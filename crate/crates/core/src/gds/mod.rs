//! Guided dynamical systems.
//!
//! A system is a state space, generator maps δᵢ, and one closed guiding set
//! Λᵢ per generator. Applying δᵢ at a point of Λᵢ is forbidden; orbits that
//! respect this rule are called Λ-proper. Generator indices are 0-based.

mod conjugacy;
mod contraction;
mod graph;
mod orbit;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::exprlang::{DomainError, Expression};
use crate::numeric::linspace;

pub use conjugacy::{verify_conjugacy, ConjugacyReport};
pub use contraction::{check_contraction_minimality, ContractionEvidence, ContractionRefusal};
pub use graph::{build_orbit_graph, minimal_subsystems, OrbitGraph};
pub use orbit::{
    find_guided_cycles, guided_orbit_set, probe_minimality, probe_weak_attractor, CycleReport,
    MinimalityVerdict, OrbitCloud, OrbitOptions, WeakAttractorVerdict,
};

/// Number of points used when validating maps and coefficients.
pub const VALIDATION_POINTS: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum GdsError {
    #[error("invalid state space: {0}")]
    InvalidSpace(String),
    #[error("{0}")]
    Shape(String),
    #[error("generator {gen} maps {x} to {image}, outside the state space")]
    MapEscape { gen: usize, x: f64, image: f64 },
    #[error("guiding sets have a common point near {0}")]
    GuidingIntersection(f64),
    #[error("coefficient {gen} is negative ({value}) at {x}")]
    NegativeCoefficient { gen: usize, x: f64, value: f64 },
    #[error("conjugacy is not invertible: |phi_inv(phi(x)) - x| = {defect} at x = {x}")]
    NotInvertible { x: f64, defect: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Tolerances shared by all guided-system computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Distance below which a point counts as a member of a guiding set.
    pub lambda: f64,
    /// Allowed defect between consecutive orbit points and the generator image.
    pub step: f64,
    /// Allowed overshoot of map images outside the space.
    pub range: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lambda: 1e-9,
            step: 1e-9,
            range: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StateSpace {
    Interval { a: f64, b: f64 },
    Circle { period: f64 },
    Graph { nodes: usize },
}

impl StateSpace {
    pub fn circle() -> Self {
        StateSpace::Circle {
            period: std::f64::consts::TAU,
        }
    }

    pub fn validate(&self) -> Result<(), GdsError> {
        match *self {
            StateSpace::Interval { a, b } if !(a < b) || !a.is_finite() || !b.is_finite() => {
                Err(GdsError::InvalidSpace(format!("interval needs a < b, got [{a}, {b}]")))
            }
            StateSpace::Circle { period } if !(period > 0.0) || !period.is_finite() => {
                Err(GdsError::InvalidSpace(format!("circle period must be positive, got {period}")))
            }
            StateSpace::Graph { nodes: 0 } => {
                Err(GdsError::InvalidSpace("graph needs at least one node".into()))
            }
            _ => Ok(()),
        }
    }

    /// Lower end and length of the parameter range.
    pub fn extent(&self) -> (f64, f64) {
        match *self {
            StateSpace::Interval { a, b } => (a, b - a),
            StateSpace::Circle { period } => (0.0, period),
            StateSpace::Graph { nodes } => (0.0, nodes as f64),
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, StateSpace::Circle { .. })
    }

    pub fn dist(&self, x: f64, y: f64) -> f64 {
        match *self {
            StateSpace::Circle { period } => {
                let d = (x - y).rem_euclid(period);
                d.min(period - d)
            }
            _ => (x - y).abs(),
        }
    }

    /// Canonical representative: circle points reduced to [0, period).
    pub fn normalize(&self, x: f64) -> f64 {
        match *self {
            StateSpace::Circle { period } => {
                let r = x.rem_euclid(period);
                if r >= period {
                    0.0
                } else {
                    r
                }
            }
            _ => x,
        }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        match *self {
            StateSpace::Interval { a, b } => x >= a - tol && x <= b + tol,
            StateSpace::Circle { .. } => x.is_finite(),
            StateSpace::Graph { nodes } => x >= 0.0 && (x as usize) < nodes && x.fract() == 0.0,
        }
    }

    /// Validation grid: nodes for graphs, equispaced points otherwise.
    pub fn sample_points(&self, n: usize) -> Vec<f64> {
        match *self {
            StateSpace::Interval { a, b } => linspace(a, b, n),
            StateSpace::Circle { period } => (0..n).map(|j| period * j as f64 / n as f64).collect(),
            StateSpace::Graph { nodes } => (0..nodes).map(|v| v as f64).collect(),
        }
    }
}

/// A procedurally defined map (e.g. one that inverts another map by bisection).
pub trait MapFn: Send + Sync {
    fn eval(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> Option<f64>;
}

impl<F, D> MapFn for (F, D)
where
    F: Fn(f64) -> f64 + Send + Sync,
    D: Fn(f64) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
    fn derivative(&self, t: f64) -> Option<f64> {
        Some((self.1)(t))
    }
}

#[derive(Clone)]
pub enum GeneratorMap {
    Expr { map: Expression, derivative: Expression },
    /// Successor table of a finite graph.
    Table(Vec<usize>),
    Custom(Arc<dyn MapFn>),
}

impl fmt::Debug for GeneratorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorMap::Expr { map, .. } => write!(f, "Expr({map})"),
            GeneratorMap::Table(t) => write!(f, "Table({t:?})"),
            GeneratorMap::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl GeneratorMap {
    pub fn expr(map: Expression) -> Self {
        let derivative = map.differentiate();
        GeneratorMap::Expr { map, derivative }
    }

    pub fn custom<F, D>(map: F, derivative: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        GeneratorMap::Custom(Arc::new((map, derivative)))
    }

    /// Raw image, without wrapping or clamping.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GeneratorMap::Expr { map, .. } => map.eval_or_nan(t),
            GeneratorMap::Table(table) => {
                let v = t as usize;
                table.get(v).map_or(f64::NAN, |&w| w as f64)
            }
            GeneratorMap::Custom(m) => m.eval(t),
        }
    }

    pub fn derivative(&self, t: f64) -> Option<f64> {
        match self {
            GeneratorMap::Expr { derivative, .. } => derivative.eval(t).ok(),
            GeneratorMap::Table(_) => None,
            GeneratorMap::Custom(m) => m.derivative(t),
        }
    }
}

/// Finite union of closed intervals with a membership tolerance.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GuidingSet {
    pub intervals: Vec<(f64, f64)>,
}

impl GuidingSet {
    pub fn empty() -> Self {
        GuidingSet::default()
    }

    pub fn points(points: &[f64]) -> Self {
        GuidingSet {
            intervals: points.iter().map(|&p| (p, p)).collect(),
        }
    }

    pub fn from_intervals(intervals: Vec<(f64, f64)>) -> Self {
        GuidingSet {
            intervals: crate::numeric::merge_intervals(intervals, 0.0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Distance from `x` to the set (infinite for the empty set).
    pub fn dist(&self, space: &StateSpace, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| {
                if space.is_circle() {
                    if hi - lo >= space.extent().1 {
                        return 0.0;
                    }
                    // Inside the arc [lo, hi] after unwrapping x past lo.
                    let period = space.extent().1;
                    let u = lo + (x - lo).rem_euclid(period);
                    if u <= hi {
                        0.0
                    } else {
                        space.dist(x, lo).min(space.dist(x, hi))
                    }
                } else if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, space: &StateSpace, x: f64, tol: f64) -> bool {
        self.dist(space, x) <= tol
    }

    /// Interval containing `x` within `tol`, if any.
    pub fn component_of(&self, space: &StateSpace, x: f64, tol: f64) -> Option<usize> {
        self.intervals.iter().position(|&iv| {
            GuidingSet {
                intervals: vec![iv],
            }
            .dist(space, x)
                <= tol
        })
    }
}

#[derive(Debug, Clone)]
pub struct GuidedSystem {
    pub space: StateSpace,
    pub generators: Vec<GeneratorMap>,
    pub guiding: Vec<GuidingSet>,
    pub coeffs: Option<Vec<Expression>>,
    pub tol: Tolerances,
}

impl GuidedSystem {
    /// Validates and builds a system. Coefficients may be attached later with
    /// [`GuidedSystem::with_coeffs`].
    pub fn new(
        space: StateSpace,
        generators: Vec<GeneratorMap>,
        guiding: Vec<GuidingSet>,
        tol: Tolerances,
    ) -> Result<Self, GdsError> {
        space.validate()?;
        if generators.is_empty() {
            return Err(GdsError::Shape("at least one generator is required".into()));
        }
        if generators.len() != guiding.len() {
            return Err(GdsError::Shape(format!(
                "{} generators but {} guiding sets",
                generators.len(),
                guiding.len()
            )));
        }
        let sys = GuidedSystem {
            space,
            generators,
            guiding,
            coeffs: None,
            tol,
        };
        sys.check_maps()?;
        sys.check_guiding_intersection()?;
        Ok(sys)
    }

    /// Unguided system (every Λᵢ empty).
    pub fn unguided(space: StateSpace, generators: Vec<GeneratorMap>) -> Result<Self, GdsError> {
        let n = generators.len();
        Self::new(space, generators, vec![GuidingSet::empty(); n], Tolerances::default())
    }

    pub fn with_coeffs(mut self, coeffs: Vec<Expression>) -> Result<Self, GdsError> {
        if coeffs.len() != self.generators.len() {
            return Err(GdsError::Shape(format!(
                "{} coefficients for {} generators",
                coeffs.len(),
                self.generators.len()
            )));
        }
        for x in self.space.sample_points(VALIDATION_POINTS) {
            for (gen, a) in coeffs.iter().enumerate() {
                let value = a.eval(x)?;
                if value < -self.tol.range {
                    return Err(GdsError::NegativeCoefficient { gen, x, value });
                }
            }
        }
        self.coeffs = Some(coeffs);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    fn check_maps(&self) -> Result<(), GdsError> {
        if let StateSpace::Graph { nodes } = self.space {
            for (gen, g) in self.generators.iter().enumerate() {
                match g {
                    GeneratorMap::Table(t) if t.len() == nodes => {
                        if let Some((x, &w)) = t.iter().enumerate().find(|(_, &w)| w >= nodes) {
                            return Err(GdsError::MapEscape {
                                gen,
                                x: x as f64,
                                image: w as f64,
                            });
                        }
                    }
                    _ => {
                        return Err(GdsError::Shape(format!(
                            "graph generator {gen} must be a table of {nodes} successors"
                        )))
                    }
                }
            }
            return Ok(());
        }
        for x in self.space.sample_points(VALIDATION_POINTS) {
            for (gen, g) in self.generators.iter().enumerate() {
                if let GeneratorMap::Expr { map, .. } = g {
                    map.eval(x)?;
                }
                let image = g.eval(x);
                if !self.space.contains(image, self.tol.range) {
                    return Err(GdsError::MapEscape { gen, x, image });
                }
            }
        }
        Ok(())
    }

    fn check_guiding_intersection(&self) -> Result<(), GdsError> {
        // Candidate common points: endpoints of every interval.
        let candidates = self.guiding.iter().flat_map(|g| g.intervals.iter().flat_map(|&(a, b)| [a, b]));
        for x in candidates {
            if self.guiding.iter().all(|g| g.contains(&self.space, x, 0.0)) {
                return Err(GdsError::GuidingIntersection(x));
            }
        }
        Ok(())
    }

    /// Image of `x` under generator `i`, wrapped or clamped into the space.
    pub fn step(&self, i: usize, x: f64) -> f64 {
        let y = self.generators[i].eval(x);
        match self.space {
            StateSpace::Interval { a, b } => y.clamp(a, b),
            _ => self.space.normalize(y),
        }
    }

    pub fn is_allowed(&self, i: usize, x: f64) -> bool {
        !self.guiding[i].contains(&self.space, x, self.tol.lambda)
    }

    /// Generators that may be applied at `x`.
    pub fn allowed_generators(&self, x: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_allowed(i, x)).collect()
    }

    /// Whether `x` lies in the union of guiding sets.
    pub fn in_guiding_union(&self, x: f64) -> bool {
        self.guiding.iter().any(|g| g.contains(&self.space, x, self.tol.lambda))
    }

    pub fn all_guiding_empty(&self) -> bool {
        self.guiding.iter().all(GuidingSet::is_empty)
    }
}

/// Points x₀…xₙ and the generator used for each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Orbit {
    pub points: Vec<f64>,
    pub generators: Vec<usize>,
}

impl Orbit {
    /// Whether every step is allowed and matches the generator image.
    pub fn is_valid(&self, sys: &GuidedSystem) -> bool {
        self.points.len() == self.generators.len() + 1
            && self.generators.iter().enumerate().all(|(j, &i)| {
                let x = self.points[j];
                i < sys.len()
                    && sys.is_allowed(i, x)
                    && sys.space.dist(self.points[j + 1], sys.step(i, x)) <= sys.tol.step
            })
    }
}

/// Equal-width cells partitioning an interval or circle (nodes for graphs).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cells {
    pub lo: f64,
    pub width: f64,
    pub count: usize,
    circle: bool,
}

impl Cells {
    /// Cells of width at most `eps`.
    pub fn with_width(space: &StateSpace, eps: f64) -> Self {
        let len = space.extent().1;
        let count = match space {
            StateSpace::Graph { nodes } => *nodes,
            _ => ((len / eps).ceil() as usize).max(1),
        };
        Cells::with_count(space, count)
    }

    pub fn with_count(space: &StateSpace, count: usize) -> Self {
        let (lo, len) = space.extent();
        Cells {
            lo,
            width: len / count as f64,
            count,
            circle: space.is_circle(),
        }
    }

    pub fn index(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.width).floor();
        if self.circle {
            (k as i64).rem_euclid(self.count as i64) as usize
        } else if k < 0.0 {
            0
        } else {
            (k as usize).min(self.count - 1)
        }
    }

    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = self.lo + self.width * k as f64;
        (lo, lo + self.width)
    }
}

/// CSV of an orbit cloud: header `t,depth`, one point per row.
pub fn cloud_to_csv(cloud: &OrbitCloud) -> String {
    let mut s = String::from("t,depth\n");
    for (x, d) in &cloud.points {
        s.push_str(&format!("{x:.17e},{d}\n"));
    }
    s
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn allowed_generators_on_circle() {
        let sys = circle_system(0.25, 0.5);
        assert_eq!(sys.allowed_generators(0.0), vec![1]);
        assert_eq!(sys.allowed_generators(PI / 3.0), vec![0, 1]);
        assert_eq!(sys.allowed_generators(1e-12), vec![1]);
        // wraparound: just below 2π is near 0
        assert_eq!(sys.allowed_generators(2.0 * PI - 1e-12), vec![1]);
        assert_eq!(sys.allowed_generators(PI / 2.0), vec![0]);
    }

    #[test]
    fn circle_metric_wraps() {
        let s = StateSpace::circle();
        assert!((s.dist(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((s.normalize(-0.5) - (2.0 * PI - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rejects_escaping_map() {
        let r = GuidedSystem::unguided(
            StateSpace::Interval { a: 0.0, b: 1.0 },
            expr_maps(&["2*t"]),
        );
        assert!(matches!(r, Err(GdsError::MapEscape { gen: 0, .. })));
    }

    #[test]
    fn rejects_common_guiding_point() {
        let r = GuidedSystem::new(
            StateSpace::Interval { a: -1.0, b: 1.0 },
            expr_maps(&["(t+1)/2", "(t-1)/2"]),
            vec![GuidingSet::points(&[0.0]), GuidingSet::from_intervals(vec![(-0.5, 0.5)])],
            Tolerances::default(),
        );
        assert!(matches!(r, Err(GdsError::GuidingIntersection(_))));
    }

    #[test]
    fn orbit_validation() {
        let sys = circle_system(0.25, 0.5);
        let good = Orbit {
            points: vec![0.0, PI, 0.0],
            generators: vec![1, 1],
        };
        assert!(good.is_valid(&sys));
        let improper = Orbit {
            points: vec![0.0, PI / 2.0],
            generators: vec![0],
        };
        assert!(!improper.is_valid(&sys));
    }

    #[test]
    fn circle_cells_wrap() {
        let c = Cells::with_count(&StateSpace::circle(), 8);
        assert_eq!(c.index(-0.1), 7);
        assert_eq!(c.index(2.0 * PI), 0);
        assert_eq!(c.index(PI / 4.0 + 1e-9), 1);
    }
}
