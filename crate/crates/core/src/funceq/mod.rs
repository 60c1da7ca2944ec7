//! The operator A f = Σ aᵢ · f∘δᵢ on grid functions: application, the
//! contraction certificate built from gₙ = Aⁿ1, Neumann-series solving, and
//! maximum-principle / uniqueness checks.

pub(crate) mod grid;
mod maxp;
mod operator;

use crate::exprlang::DomainError;
use crate::gds::{GdsError, GuidedSystem};

pub use grid::GridFunction;
pub use maxp::{
    check_max_principle, check_triangular_family, verify_triangular_uniqueness, MaxPrincipleReport,
    TriangularFamily, TriangularReport, UniquenessReport, MAX_PRINCIPLE_DEPTH,
};
pub use operator::{
    apply_operator, certify_contraction, compute_g_n, solve_neumann, CertificateFailure, ContractionCertificate,
    DiscreteOperator, GnMode, NeumannReport,
};

#[derive(Debug, thiserror::Error)]
pub enum FunceqError {
    #[error("{0}")]
    Shape(String),
    #[error("query point {0} lies outside the grid domain")]
    OutOfDomain(f64),
    #[error("generator {gen} maps node {x} to {image}, outside the domain")]
    MapEscape { gen: usize, x: f64, image: f64 },
    #[error("explicit g_n needs {needed} terms per node, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },
    #[error("no contraction certificate: sup g_m = {norm} at m = {m}")]
    NotCertified { m: usize, norm: f64 },
    #[error("no convergence after {iterations} iterations (last change {change})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("not a solution: homogeneous residual {residual} exceeds {tol}")]
    NotASolution { residual: f64, tol: f64 },
    #[error("hypothesis failed: {condition} at x = {x}")]
    HypothesisFailure { condition: String, x: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Gds(#[from] GdsError),
}

/// A guided system whose coefficients aᵢ are present.
#[derive(Debug, Clone)]
pub struct FunceqSystem {
    pub system: GuidedSystem,
}

impl FunceqSystem {
    pub fn new(system: GuidedSystem) -> Result<Self, FunceqError> {
        if system.coeffs.is_none() {
            return Err(FunceqError::Shape("the functional equation needs coefficients".into()));
        }
        Ok(FunceqSystem { system })
    }

    pub fn coeff(&self, i: usize, x: f64) -> Result<f64, FunceqError> {
        let coeffs = self.system.coeffs.as_ref().expect("checked at construction");
        Ok(coeffs[i].eval(x)?)
    }

    /// Image δᵢ(x), wrapped on circles; errors if it leaves an interval beyond tolerance.
    pub fn image(&self, i: usize, x: f64) -> Result<f64, FunceqError> {
        checked_image(&self.system, i, x)
    }
}

pub(crate) fn checked_image(sys: &GuidedSystem, i: usize, x: f64) -> Result<f64, FunceqError> {
    let y = sys.generators[i].eval(x);
    if !sys.space.contains(y, sys.tol.range) {
        return Err(FunceqError::MapEscape { gen: i, x, image: y });
    }
    Ok(sys.step(i, x))
}
