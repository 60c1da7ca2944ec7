use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::system::BoundarySystem;
use super::{BoundaryProblem, BvpError};
use crate::funceq::GridFunction;
use crate::gds::StateSpace;
use crate::numeric::linspace;
use crate::pconf::{solve_ivp, HData, IvpDiagnostics, IvpProblem};

const BOUNDARY_SAMPLES: usize = 1000;
/// Lattice points kept clear of ∂D, in lattice steps.
const FD_MARGIN: f64 = 2.0;
pub const DEFAULT_LATTICE: usize = 128;

/// h(t) = g_Γ(z(t)) − g₁(x(t)) − g₂(y(t)) + g(O) on an M-interval grid of
/// [−m, n], where (x(t), y(t)) = ω⁻¹(t) on Γ. Requires the corner
/// compatibility of g, under which h(−m) = h(n) = 0.
pub fn reduce_boundary_data(sys: &BoundarySystem, m: usize) -> Result<GridFunction, BvpError> {
    let p = &sys.problem;
    let tol = p.tol;
    let corners = p.corner_defects()?;
    let checks = [
        ("O", p.g1.eval(0.0)?, p.g2.eval(0.0)?, corners.origin),
        ("A₁", p.g1.eval(1.0)?, p.g_gamma.eval(1.0)?, corners.a1),
        ("A₂", p.g2.eval(1.0)?, p.g_gamma.eval(-1.0)?, corners.a2),
    ];
    for (corner, left, right, defect) in checks {
        if !(defect <= tol) {
            return Err(BvpError::CornerMismatch { corner, left, right });
        }
    }
    let g0 = p.g_origin()?;
    let c = &p.curve;
    let (a, b) = sys.interval();
    let h = |t: f64| -> Result<f64, BvpError> {
        let z = c.omega_inv(t);
        let (x, y) = c.point(z);
        Ok(p.g_gamma.eval(z)? - p.g1.eval(x)? - p.g2.eval(y)? + g0)
    };
    let values: Vec<f64> = linspace(a, b, m).into_iter().map(h).collect::<Result<_, _>>()?;
    for (corner, v) in [("A₂", values[0]), ("A₁", values[m])] {
        if !(v.abs() <= tol) {
            return Err(BvpError::CornerMismatch {
                corner,
                left: v,
                right: 0.0,
            });
        }
    }
    Ok(GridFunction::new(StateSpace::Interval { a, b }, values)?)
}

/// u(x, y) = φ(x) + ψ(y) + χ(nx − my) with ψ(0) = 0.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionTriple {
    /// φ(x) = g₁(x) − χ(nx) on [0, 1].
    pub phi: GridFunction,
    /// ψ(y) = g₂(y) − g(O) − χ(−my) on [0, 1].
    pub psi: GridFunction,
    /// Solution of χ − χ∘δ₁ − χ∘δ₂ = h on [−m, n].
    pub chi: GridFunction,
    /// χ′(0) imposed on the solve.
    pub chi_prime0: f64,
    /// χ(0) as solved; the anchor identity forces it to vanish.
    pub chi0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// sup |u − g| over the three boundary parts.
    pub boundary_defect: f64,
    /// (segment OA₁, segment OA₂, Γ)
    pub boundary_parts: [f64; 3],
    /// sup over interior lattice points of the central-difference
    /// (m∂x + n∂y)∂x∂y u.
    pub pde_residual: f64,
    pub lattice: usize,
    pub lattice_points: usize,
    /// Nodal collocation residual of the χ solve.
    pub collocation_residual: f64,
    /// |χ(0)| against 10× the collocation residual.
    pub chi0_defect: f64,
    pub verdict: &'static str,
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub problem: BoundaryProblem,
    pub triple: SolutionTriple,
    pub diagnostics: IvpDiagnostics,
    pub verification: VerificationReport,
    g0: f64,
}

impl BvpSolution {
    fn chi(&self, t: f64) -> f64 {
        self.triple.chi.eval_cubic(t).unwrap_or(f64::NAN)
    }

    /// u at (x, y), or `None` outside D̄.
    pub fn u(&self, x: f64, y: f64) -> Option<f64> {
        self.problem.contains(x, y).then(|| self.u_unchecked(x, y))
    }

    fn u_unchecked(&self, x: f64, y: f64) -> f64 {
        let p = &self.problem;
        let (m, n) = (p.m(), p.n());
        let phi = p.g1.eval_or_nan(x) - self.chi(n * x);
        let psi = p.g2.eval_or_nan(y) - self.g0 - self.chi(-m * y);
        phi + psi + self.chi(n * x - m * y)
    }

    /// `x,y,u` rows for the lattice points of D̄ with spacing 1/k.
    pub fn lattice_csv(&self, k: usize) -> String {
        let mut out = String::from("x,y,u\n");
        for i in 0..=k {
            for j in 0..=k {
                let (x, y) = (i as f64 / k as f64, j as f64 / k as f64);
                if let Some(u) = self.u(x, y) {
                    let _ = writeln!(out, "{x},{y},{u}");
                }
            }
        }
        out
    }

    /// Central-difference (m∂x + n∂y)∂x∂y u over lattice points whose whole
    /// stencil stays FD_MARGIN steps inside D̄.
    pub fn pde_residual(&self, k: usize) -> (f64, usize) {
        let h = 1.0 / k as f64;
        let p = &self.problem;
        let (m, n) = (p.m(), p.n());
        let points: Vec<(f64, f64)> = (0..=k)
            .flat_map(|i| (0..=k).map(move |j| (i as f64 * h, j as f64 * h)))
            .filter(|&(x, y)| {
                x >= FD_MARGIN * h && y >= FD_MARGIN * h && p.contains(x + FD_MARGIN * h, y + FD_MARGIN * h)
            })
            .collect();
        let u = |x: f64, y: f64| self.u_unchecked(x, y);
        let uxy = |x: f64, y: f64| (u(x + h, y + h) - u(x + h, y - h) - u(x - h, y + h) + u(x - h, y - h)) / (4.0 * h * h);
        let worst = points
            .par_iter()
            .map(|&(x, y)| {
                let dx = (uxy(x + h, y) - uxy(x - h, y)) / (2.0 * h);
                let dy = (uxy(x, y + h) - uxy(x, y - h)) / (2.0 * h);
                (m * dx + n * dy).abs()
            })
            .reduce(|| 0.0, f64::max);
        (worst, points.len())
    }

    /// Recomputes the verification report with FD lattice spacing 1/`lattice`.
    pub fn reverify(&mut self, lattice: usize) {
        let p = &self.problem;
        let s = linspace(0.0, 1.0, BOUNDARY_SAMPLES);
        let z = linspace(-1.0, 1.0, BOUNDARY_SAMPLES);
        let sup = |it: Vec<f64>| it.into_iter().fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
        let parts = [
            sup(s.iter().map(|&x| (self.u_unchecked(x, 0.0) - p.g1.eval_or_nan(x)).abs()).collect()),
            sup(s.iter().map(|&y| (self.u_unchecked(0.0, y) - p.g2.eval_or_nan(y)).abs()).collect()),
            sup(z
                .iter()
                .map(|&z| {
                    let (x, y) = p.curve.point(z);
                    (self.u_unchecked(x, y) - p.g_gamma.eval_or_nan(z)).abs()
                })
                .collect()),
        ];
        let boundary_defect = parts.iter().copied().fold(0.0, f64::max);
        let (pde_residual, lattice_points) = self.pde_residual(lattice);
        let residual = self.diagnostics.residual;
        let allowance = 10.0 * residual.max(1e-13);
        let chi0_defect = self.triple.chi0.abs();
        let passed = boundary_defect <= allowance && chi0_defect <= allowance;
        self.verification = VerificationReport {
            boundary_defect,
            boundary_parts: parts,
            pde_residual,
            lattice,
            lattice_points,
            collocation_residual: residual,
            chi0_defect,
            verdict: if passed { "pass" } else { "fail" },
        };
    }
}

/// Solves with the gauge χ′(0) = 0.
pub fn solve_bvp(sys: &BoundarySystem, m: usize) -> Result<BvpSolution, BvpError> {
    solve_bvp_with_gauge(sys, m, 0.0)
}

/// Solves with χ′(0) = μ. Different μ shift χ by a linear term that φ and ψ
/// absorb, so u itself does not depend on μ.
pub fn solve_bvp_with_gauge(sys: &BoundarySystem, m: usize, mu: f64) -> Result<BvpSolution, BvpError> {
    let h = reduce_boundary_data(sys, m)?;
    let ivp = IvpProblem::new(sys.pconf.clone(), HData::Grid(h), 0.0, mu);
    let (chi, diagnostics) = solve_ivp(&ivp, m)?;
    let p = &sys.problem;
    let (mm, n) = (p.m(), p.n());
    let g0 = p.g_origin()?;
    let chi_at = |t: f64| chi.eval_cubic(t).unwrap_or(f64::NAN);
    let unit = StateSpace::Interval { a: 0.0, b: 1.0 };
    let phi = GridFunction::from_fn(unit, m, |x| p.g1.eval_or_nan(x) - chi_at(n * x))?;
    let psi = GridFunction::from_fn(unit, m, |y| p.g2.eval_or_nan(y) - g0 - chi_at(-mm * y))?;
    let chi0 = chi_at(0.0);
    let mut sol = BvpSolution {
        problem: p.clone(),
        triple: SolutionTriple {
            phi,
            psi,
            chi,
            chi_prime0: mu,
            chi0,
        },
        diagnostics,
        verification: VerificationReport {
            boundary_defect: f64::NAN,
            boundary_parts: [f64::NAN; 3],
            pde_residual: f64::NAN,
            lattice: 0,
            lattice_points: 0,
            collocation_residual: f64::NAN,
            chi0_defect: f64::NAN,
            verdict: "fail",
        },
        g0,
    };
    sol.reverify(DEFAULT_LATTICE);
    Ok(sol)
}
