//! Overdetermined functional equations f(F(x,y)) = H[f(x), f(y), x, y]
//! solved by propagating boundary values along the orbits of α(x) = F(a,x)
//! and β(x) = F(x,b), plus the affine Cauchy equation in ℝⁿ.

mod affine;
mod eigen;
mod overdet;

use crate::exprlang::DomainError;

pub use affine::{
    analyze_affine, orbit_rate, verify_cauchy_solution, verify_l1_ball, verify_linear_solution, AffineCauchyAnalysis, BallFamily,
    ResidualReport,
};
pub use eigen::{closed_form_symmetric_eigenvalues, jacobi_eigenvalues};
pub use overdet::{
    check_consistency, propagate_values, propagate_values_with_budget, CloudEntry, Collision, ConsistencyReport,
    ConsistencyVerdict, HShape, OverdetProblem, PropagationCloud, Seed, StopReason, Witness, PROPAGATION_BUDGET,
};

#[derive(Debug, thiserror::Error)]
pub enum CauchyError {
    #[error("{0}")]
    Shape(String),
    #[error("hypothesis failed: {condition}{}", at.map(|x| format!(" at {x}")).unwrap_or_default())]
    HypothesisFailure { condition: String, at: Option<f64> },
    #[error("fixed-point iteration did not settle within {0} steps")]
    NoConvergence(usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl CauchyError {
    fn hypothesis(condition: impl Into<String>, at: Option<f64>) -> Self {
        CauchyError::HypothesisFailure {
            condition: condition.into(),
            at,
        }
    }
}
