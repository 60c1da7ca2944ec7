use rayon::prelude::*;
use serde::Serialize;

use super::{FunceqError, FunceqSystem, GridFunction};
use crate::gds::StateSpace;

/// Explicit-mode budget on the number of multi-indices per node.
pub const EXPLICIT_BUDGET: f64 = 1e6;
/// Certificates require sup gₘ below 1 by this margin.
pub const CERTIFICATE_MARGIN: f64 = 1e-6;

/// The operator A assembled on a fixed grid: for every node, the coefficient,
/// left interpolation node and right weight of each term.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    space: StateSpace,
    m: usize,
    /// (aᵢ(t_j), k, w) for node j and generator i at index j·N + i.
    terms: Vec<(f64, usize, f64)>,
    generators: usize,
}

impl DiscreteOperator {
    pub fn new(sys: &FunceqSystem, m: usize) -> Result<Self, FunceqError> {
        let space = sys.system.space;
        let template = GridFunction::constant(space, m, 0.0)?;
        let n = sys.system.len();
        let mut terms = Vec::with_capacity((m + 1) * n);
        for j in 0..=m {
            let x = template.node(j);
            for i in 0..n {
                let c = sys.coeff(i, x)?;
                let y = sys.image(i, x)?;
                let (k, w) = template.locate(y)?;
                terms.push((c, k, w));
            }
        }
        Ok(DiscreteOperator {
            space,
            m,
            terms,
            generators: n,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction, FunceqError> {
        if f.m() != self.m || f.space != self.space {
            return Err(FunceqError::Shape(format!(
                "grid mismatch: operator has M = {}, function has M = {}",
                self.m,
                f.m()
            )));
        }
        let n = self.generators;
        let v = &f.values;
        let mut values: Vec<f64> = (0..=self.m)
            .into_par_iter()
            .map(|j| {
                self.terms[j * n..(j + 1) * n]
                    .iter()
                    .map(|&(c, k, w)| {
                        if w == 0.0 {
                            c * v[k]
                        } else {
                            c * ((1.0 - w) * v[k] + w * v[k + 1])
                        }
                    })
                    .sum()
            })
            .collect();
        if self.space.is_circle() {
            values[self.m] = values[0];
        }
        Ok(GridFunction {
            space: self.space,
            values,
            clamp_tol: f.clamp_tol,
        })
    }
}

/// (A f)(t_j) = Σᵢ aᵢ(t_j) f(δᵢ(t_j)) with f interpolated.
pub fn apply_operator(sys: &FunceqSystem, f: &GridFunction) -> Result<GridFunction, FunceqError> {
    DiscreteOperator::new(sys, f.m())?.apply(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnMode {
    /// n grid applications of A to the constant 1.
    Iterated,
    /// Sum over all multi-indices of products of coefficients along the
    /// composed maps, evaluated exactly at each node.
    Explicit,
}

/// gₙ = Aⁿ1 on an M-interval grid.
pub fn compute_g_n(sys: &FunceqSystem, m: usize, n: usize, mode: GnMode) -> Result<GridFunction, FunceqError> {
    match mode {
        GnMode::Iterated => {
            let op = DiscreteOperator::new(sys, m)?;
            let mut g = GridFunction::constant(sys.system.space, m, 1.0)?;
            for _ in 0..n {
                g = op.apply(&g)?;
            }
            Ok(g)
        }
        GnMode::Explicit => {
            let needed = (sys.system.len() as f64).powi(n as i32);
            if needed > EXPLICIT_BUDGET {
                return Err(FunceqError::BudgetExceeded {
                    needed,
                    budget: EXPLICIT_BUDGET,
                });
            }
            let template = GridFunction::constant(sys.system.space, m, 0.0)?;
            let values: Result<Vec<f64>, FunceqError> = (0..=m)
                .into_par_iter()
                .map(|j| explicit_term(sys, template.node(j), n))
                .collect();
            let mut values = values?;
            if sys.system.space.is_circle() {
                values[m] = values[0];
            }
            GridFunction::new(sys.system.space, values)
        }
    }
}

fn explicit_term(sys: &FunceqSystem, x: f64, n: usize) -> Result<f64, FunceqError> {
    if n == 0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for i in 0..sys.system.len() {
        let c = sys.coeff(i, x)?;
        if c != 0.0 {
            total += c * explicit_term(sys, sys.image(i, x)?, n - 1)?;
        }
    }
    Ok(total)
}

/// Proof that ‖Aᵐ‖ = sup gₘ < 1 on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionCertificate {
    pub m: usize,
    pub norm: f64,
    /// Number of grid intervals.
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateFailure {
    pub m_max: usize,
    /// sup g_{m_max}
    pub norm: f64,
    pub grid: usize,
}

/// Smallest m ≤ `m_max` with sup gₘ < 1 − margin.
pub fn certify_contraction(
    sys: &FunceqSystem,
    grid: usize,
    m_max: usize,
) -> Result<Result<ContractionCertificate, CertificateFailure>, FunceqError> {
    let op = DiscreteOperator::new(sys, grid)?;
    let mut g = GridFunction::constant(sys.system.space, grid, 1.0)?;
    let mut norm = 1.0;
    for m in 1..=m_max {
        g = op.apply(&g)?;
        norm = g.sup_norm();
        if norm < 1.0 - CERTIFICATE_MARGIN {
            return Ok(Ok(ContractionCertificate { m, norm, grid }));
        }
    }
    Ok(Err(CertificateFailure {
        m_max,
        norm,
        grid,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeumannReport {
    pub iterations: usize,
    pub last_change: f64,
    /// sup |f − A f − h| over the grid.
    pub residual: f64,
    pub certificate: ContractionCertificate,
}

/// Solves f − A f = h by f ← A f + h, after certifying that I − A is invertible.
pub fn solve_neumann(
    sys: &FunceqSystem,
    h: &GridFunction,
    tol: f64,
    max_iter: usize,
) -> Result<(GridFunction, NeumannReport), FunceqError> {
    let certificate = match certify_contraction(sys, h.m(), 64)? {
        Ok(c) => c,
        Err(fail) => {
            return Err(FunceqError::NotCertified {
                m: fail.m_max,
                norm: fail.norm,
            })
        }
    };
    let op = DiscreteOperator::new(sys, h.m())?;
    let mut f = h.clone();
    for it in 1..=max_iter {
        let af = op.apply(&f)?;
        let next = GridFunction {
            values: af.values.iter().zip(&h.values).map(|(a, b)| a + b).collect(),
            ..af
        };
        let change = next.sup_distance(&f);
        f = next;
        if change < tol {
            let af = op.apply(&f)?;
            let residual = (0..=f.m()).fold(0.0f64, |r, j| r.max((f.values[j] - af.values[j] - h.values[j]).abs()));
            return Ok((
                f,
                NeumannReport {
                    iterations: it,
                    last_change: change,
                    residual,
                    certificate,
                },
            ));
        }
        if it == max_iter {
            return Err(FunceqError::NoConvergence {
                iterations: max_iter,
                change,
            });
        }
    }
    Err(FunceqError::NoConvergence {
        iterations: max_iter,
        change: f64::NAN,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::exprlang::parse;
    use crate::gds::testing::expr_maps;
    use crate::gds::{GuidedSystem, StateSpace};

    pub fn quarter_system(a1: &str, a2: &str) -> FunceqSystem {
        let sys = GuidedSystem::unguided(
            StateSpace::Interval { a: -1.0, b: 1.0 },
            expr_maps(&["(t+1)/2", "(t-1)/2"]),
        )
        .unwrap()
        .with_coeffs(vec![parse(a1).unwrap(), parse(a2).unwrap()])
        .unwrap();
        FunceqSystem::new(sys).unwrap()
    }

    fn on_grid(src: &str, m: usize) -> GridFunction {
        GridFunction::from_expr(StateSpace::Interval { a: -1.0, b: 1.0 }, m, &parse(src).unwrap()).unwrap()
    }

    #[test]
    fn operator_on_polynomials() {
        let sys = quarter_system("1/4", "1/4");
        let af = apply_operator(&sys, &on_grid("t", 64)).unwrap();
        assert!(af.sup_error(|t| t / 4.0) < 1e-15);
        let af = apply_operator(&sys, &on_grid("1", 64)).unwrap();
        assert!(af.sup_error(|_| 0.5) < 1e-15);
        // quadratic: exact at nodes whose images are nodes (M even)
        let af = apply_operator(&sys, &on_grid("t^2", 64)).unwrap();
        for j in (0..=64).step_by(2) {
            let t = af.node(j);
            assert!((af.values[j] - (t * t + 1.0) / 8.0).abs() < 1e-15);
        }
        // elsewhere the interpolation error is at most h²/4 per term
        assert!(af.sup_error(|t| (t * t + 1.0) / 8.0) <= 0.5 * (2.0f64 / 64.0).powi(2) / 4.0 + 1e-15);
    }

    #[test]
    fn g_n_constant_coefficients() {
        let sys = quarter_system("1/4", "1/4");
        let g1 = compute_g_n(&sys, 32, 1, GnMode::Iterated).unwrap();
        let g2 = compute_g_n(&sys, 32, 2, GnMode::Iterated).unwrap();
        assert!(g1.sup_error(|_| 0.5) < 1e-15);
        assert!(g2.sup_error(|_| 0.25) < 1e-15);
        let e2 = compute_g_n(&sys, 32, 2, GnMode::Explicit).unwrap();
        assert!(e2.sup_distance(&g2) < 1e-15);
        let sys = quarter_system("1/2", "1/2");
        assert!(compute_g_n(&sys, 32, 7, GnMode::Iterated).unwrap().sup_error(|_| 1.0) < 1e-15);
    }

    #[test]
    fn explicit_budget() {
        let sys = quarter_system("1/4", "1/4");
        assert!(matches!(
            compute_g_n(&sys, 8, 21, GnMode::Explicit),
            Err(FunceqError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn certificates() {
        let c = certify_contraction(&quarter_system("1/4", "1/4"), 64, 64).unwrap().unwrap();
        assert_eq!((c.m, c.norm), (1, 0.5));
        let c = certify_contraction(&quarter_system("t^2/2", "1/2"), 200, 64).unwrap().unwrap();
        assert_eq!(c.m, 2);
        assert!(c.norm < 1.0);
        // g₂(±1) = ¾ by hand
        let g2 = compute_g_n(&quarter_system("t^2/2", "1/2"), 200, 2, GnMode::Explicit).unwrap();
        assert!((g2.values[0] - 0.75).abs() < 1e-15 && (g2.values[200] - 0.75).abs() < 1e-15);
        let fail = certify_contraction(&quarter_system("1/2", "1/2"), 64, 64).unwrap().unwrap_err();
        assert_eq!(fail.m_max, 64);
        assert!((fail.norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neumann_geometric_series() {
        let sys = quarter_system("1/4", "1/4");
        let (f, rep) = solve_neumann(&sys, &on_grid("t", 1024), 1e-13, 200).unwrap();
        assert!(f.sup_error(|t| 4.0 * t / 3.0) < 1e-12);
        assert!(rep.residual < 1e-12);
        let (f, _) = solve_neumann(&sys, &on_grid("0", 64), 1e-13, 200).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
        let (f, _) = solve_neumann(&sys, &on_grid("1", 64), 1e-13, 200).unwrap();
        assert!(f.sup_error(|_| 2.0) < 1e-12);
    }

    #[test]
    fn neumann_refuses_without_certificate() {
        let sys = quarter_system("1/2", "1/2");
        assert!(matches!(
            solve_neumann(&sys, &on_grid("t", 64), 1e-10, 100),
            Err(FunceqError::NotCertified { .. })
        ));
    }
}
