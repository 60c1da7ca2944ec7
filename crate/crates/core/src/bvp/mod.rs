//! The boundary problem (m∂x + n∂y)∂x∂y u = 0 in the curvilinear triangle
//! O A₁ A₂, u = g on ∂D, via its guided system on Γ and the P-configuration
//! on I = [−m, n].

mod solve;
mod system;

use serde::Serialize;

use crate::exprlang::{parse_with_var, DomainError, Expression, SyntaxError};
use crate::funceq::FunceqError;
use crate::gds::GdsError;
use crate::numeric::{linspace, monotone_inverse};
use crate::pconf::PconfError;

pub use solve::{DEFAULT_LATTICE, reduce_boundary_data, solve_bvp, solve_bvp_with_gauge, BvpSolution, SolutionTriple, VerificationReport};
pub use system::{
    analyze_solvability, build_boundary_system, fixed_point, BoundarySystem, CompositionFixedPoint, FixedPoint,
    FixedPointOutcome, SolvabilityReport, SolvabilityRoute, SolvabilityVerdict,
};

/// Lower bound on n·α₁′ − m·α₂′ for ω to count as a homeomorphism.
pub const SLOPE_TOL: f64 = 1e-8;
const GEOMETRY_GRID: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum BvpError {
    #[error("geometry: {condition} (z = {z}, value {value})")]
    Geometry { condition: &'static str, z: f64, value: f64 },
    #[error("ω is not strictly monotone on Γ: n·α₁′ − m·α₂′ = {slope:e} at z = {z}")]
    DegenerateParametrization { z: f64, slope: f64 },
    #[error("corner {corner}: {left} ≠ {right}")]
    CornerMismatch { corner: &'static str, left: f64, right: f64 },
    #[error("the line through ({x}, {y}) in direction (m, n) misses Γ")]
    OffCurve { x: f64, y: f64 },
    #[error("map(t) − t does not change sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("fixed point {t} has derivative {derivative}; the uniqueness lemma does not apply")]
    Inconclusive { t: f64, derivative: f64 },
    #[error("(Γ, ζ, Ω) and (I, δ, Λ) failed the conjugacy check: {0}")]
    Conjugacy(String),
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Pconf(#[from] PconfError),
    #[error(transparent)]
    Gds(#[from] GdsError),
    #[error(transparent)]
    Funceq(#[from] FunceqError),
}

/// Γ = {(α₁(z), α₂(z)) | z ∈ [−1, 1]} with the characteristic direction (m, n).
#[derive(Debug, Clone)]
pub struct Curve {
    pub alpha1: Expression,
    pub alpha2: Expression,
    pub d_alpha1: Expression,
    pub d_alpha2: Expression,
    pub m: f64,
    pub n: f64,
}

impl Curve {
    pub fn point(&self, z: f64) -> (f64, f64) {
        (self.alpha1.eval_or_nan(z), self.alpha2.eval_or_nan(z))
    }

    /// ω_Γ(α(z)) = n·α₁(z) − m·α₂(z).
    pub fn omega(&self, z: f64) -> f64 {
        let (x, y) = self.point(z);
        self.n * x - self.m * y
    }

    /// dω/dz = n·α₁′ − m·α₂′.
    pub fn slope(&self, z: f64) -> f64 {
        self.n * self.d_alpha1.eval_or_nan(z) - self.m * self.d_alpha2.eval_or_nan(z)
    }

    /// z with ω(z) = t, by bisection to machine precision.
    pub fn omega_inv(&self, t: f64) -> f64 {
        monotone_inverse(|z| self.omega(z), t, -1.0, 1.0)
    }

    /// Directional quotients δ₁′ = nα₁′/S and δ₂′ = −mα₂′/S at z.
    pub fn quotients(&self, z: f64) -> (f64, f64) {
        let s = self.slope(z);
        (
            self.n * self.d_alpha1.eval_or_nan(z) / s,
            -self.m * self.d_alpha2.eval_or_nan(z) / s,
        )
    }
}

/// Curve, direction coefficients and boundary data g = (g₁ on OA₁, g₂ on OA₂, g_Γ on Γ).
#[derive(Debug, Clone)]
pub struct BoundaryProblem {
    pub curve: Curve,
    /// g₁(x) on the segment O A₁.
    pub g1: Expression,
    /// g₂(y) on the segment O A₂.
    pub g2: Expression,
    /// g_Γ(z) on Γ.
    pub g_gamma: Expression,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CornerDefects {
    /// |g₁(0) − g₂(0)|
    pub origin: f64,
    /// |g₁(1) − g_Γ(1)|
    pub a1: f64,
    /// |g₂(1) − g_Γ(−1)|
    pub a2: f64,
}

impl BoundaryProblem {
    /// Validates the geometry: Γ runs from A₂ (z = −1) to A₁ (z = 1) with
    /// α₁′ ≥ 0 and α₂′ ≤ 0. Corner compatibility of g is checked when the
    /// data are reduced.
    pub fn new(
        alpha1: Expression,
        alpha2: Expression,
        m: f64,
        n: f64,
        g1: Expression,
        g2: Expression,
        g_gamma: Expression,
    ) -> Result<Self, BvpError> {
        let tol = 1e-9;
        if !(m > 0.0 && n > 0.0 && m.is_finite() && n.is_finite()) {
            return Err(BvpError::Shape(format!("m = {m} and n = {n} must be positive")));
        }
        let curve = Curve {
            d_alpha1: alpha1.differentiate(),
            d_alpha2: alpha2.differentiate(),
            alpha1,
            alpha2,
            m,
            n,
        };
        let ends = [
            ("α₁(−1) = 0", &curve.alpha1, -1.0, 0.0),
            ("α₂(−1) = 1", &curve.alpha2, -1.0, 1.0),
            ("α₁(1) = 1", &curve.alpha1, 1.0, 1.0),
            ("α₂(1) = 0", &curve.alpha2, 1.0, 0.0),
        ];
        for (condition, e, z, want) in ends {
            let value = e.eval(z)?;
            if !((value - want).abs() <= tol) {
                return Err(BvpError::Geometry { condition, z, value });
            }
        }
        for z in linspace(-1.0, 1.0, GEOMETRY_GRID) {
            let d1 = curve.d_alpha1.eval(z)?;
            if d1 < -tol {
                return Err(BvpError::Geometry {
                    condition: "α₁′ ≥ 0",
                    z,
                    value: d1,
                });
            }
            let d2 = curve.d_alpha2.eval(z)?;
            if d2 > tol {
                return Err(BvpError::Geometry {
                    condition: "α₂′ ≤ 0",
                    z,
                    value: d2,
                });
            }
        }
        Ok(BoundaryProblem {
            curve,
            g1,
            g2,
            g_gamma,
            tol: 1e-8,
        })
    }

    /// Parses α₁, α₂, g_Γ in z, g₁ in x and g₂ in y.
    pub fn parse(alpha1: &str, alpha2: &str, m: f64, n: f64, g1: &str, g2: &str, g_gamma: &str) -> Result<Self, BvpError> {
        Self::new(
            parse_with_var(alpha1, "z")?,
            parse_with_var(alpha2, "z")?,
            m,
            n,
            parse_with_var(g1, "x")?,
            parse_with_var(g2, "y")?,
            parse_with_var(g_gamma, "z")?,
        )
    }

    pub fn m(&self) -> f64 {
        self.curve.m
    }

    pub fn n(&self) -> f64 {
        self.curve.n
    }

    /// g(O), taken from g₁.
    pub fn g_origin(&self) -> Result<f64, BvpError> {
        Ok(self.g1.eval(0.0)?)
    }

    pub fn corner_defects(&self) -> Result<CornerDefects, BvpError> {
        Ok(CornerDefects {
            origin: (self.g1.eval(0.0)? - self.g2.eval(0.0)?).abs(),
            a1: (self.g1.eval(1.0)? - self.g_gamma.eval(1.0)?).abs(),
            a2: (self.g2.eval(1.0)? - self.g_gamma.eval(-1.0)?).abs(),
        })
    }

    /// Smallest n·α₁′ − m·α₂′ on the geometry grid, rejected below [`SLOPE_TOL`].
    pub fn check_slope(&self) -> Result<f64, BvpError> {
        let (z, slope) = linspace(-1.0, 1.0, GEOMETRY_GRID)
            .into_iter()
            .map(|z| (z, self.curve.slope(z)))
            .fold((0.0, f64::INFINITY), |best, cur| if !(cur.1 >= best.1) { cur } else { best });
        if !(slope > SLOPE_TOL) {
            return Err(BvpError::DegenerateParametrization { z, slope });
        }
        Ok(slope)
    }

    /// Whether (x, y) lies in the closed domain D̄.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = self.tol;
        if x < -tol || y < -tol {
            return false;
        }
        let c = &self.curve;
        let t = c.n * x - c.m * y;
        if t < -c.m - tol || t > c.n + tol {
            return false;
        }
        // (x, y) = π₃p − s·(m, n) with s ≥ 0 on the O side of Γ
        let (qx, qy) = c.point(c.omega_inv(t));
        (qx - x) * c.m + (qy - y) * c.n >= -tol
    }
}

/// π₃: the point of Γ on the line {p + s(m, n)}, i.e. with ω = n·p_x − m·p_y.
pub fn project_pi3(p: (f64, f64), problem: &BoundaryProblem) -> Result<(f64, f64), BvpError> {
    problem.check_slope()?;
    let c = &problem.curve;
    let t = c.n * p.0 - c.m * p.1;
    if t < -c.m - problem.tol || t > c.n + problem.tol {
        return Err(BvpError::OffCurve { x: p.0, y: p.1 });
    }
    Ok(c.point(c.omega_inv(t)))
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn straight_projection() {
        let p = problem(STRAIGHT, "0");
        let (x, y) = project_pi3((0.2, 0.3), &p).unwrap();
        assert!((x - 0.45).abs() < 1e-12 && (y - 0.55).abs() < 1e-12);
        let on = p.curve.point(0.3);
        let back = project_pi3(on, &p).unwrap();
        assert!((back.0 - on.0).abs() < 1e-12 && (back.1 - on.1).abs() < 1e-12);
    }

    #[test]
    fn curved_projection_keeps_omega() {
        let p = problem(CURVED, "0");
        let (x, y) = project_pi3((0.0, 0.0), &p).unwrap();
        assert!((x - y).abs() < 1e-12);
        assert!(x > 0.5);
    }

    #[test]
    fn geometry_is_validated() {
        let err = BoundaryProblem::parse("(1+z)/2", "(1-z)/2 + 0.1", 1.0, 1.0, "0", "0", "0").unwrap_err();
        assert!(matches!(err, BvpError::Geometry { condition: "α₂(−1) = 1", .. }), "{err}");
        let err = BoundaryProblem::parse("(1+z)/2 + 0.4*sin(pi*z)", "(1-z)/2", 1.0, 1.0, "0", "0", "0").unwrap_err();
        assert!(matches!(err, BvpError::Geometry { condition: "α₁′ ≥ 0", .. }), "{err}");
    }

    #[test]
    fn flat_curve_is_degenerate() {
        // both coordinates stall at z = 0
        let p = BoundaryProblem::parse("(1+z^3)/2", "(1-z^3)/2", 1.0, 1.0, "0", "0", "0").unwrap();
        assert!(matches!(p.check_slope(), Err(BvpError::DegenerateParametrization { .. })));
    }

    #[test]
    fn membership() {
        let p = problem(CURVED, "0");
        assert!(p.contains(0.0, 0.0));
        assert!(p.contains(0.3, 0.3));
        assert!(!p.contains(0.6, 0.6));
        assert!(!p.contains(-0.1, 0.2));
        let (x, y) = p.curve.point(0.2);
        assert!(p.contains(x, y));
        assert!(!p.contains(x + 1e-4, y + 1e-4));
    }
}
