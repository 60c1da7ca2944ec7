use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{PConfiguration, PconfError};
use crate::exprlang::Expression;
use crate::funceq::grid::cubic_weights;
use crate::funceq::GridFunction;
use crate::gds::StateSpace;

/// Largest grid solved with dense QR; beyond it CGLS on the sparse rows.
pub const DENSE_LIMIT: usize = 2048;
/// Cap on the estimated condition number of the normal equations.
pub const CONDITION_CAP: f64 = 1e24;

/// Right-hand side h, as an expression or as samples on a grid.
#[derive(Debug, Clone)]
pub enum HData {
    Expr(Expression),
    Grid(GridFunction),
}

impl HData {
    fn eval(&self, t: f64) -> Result<f64, PconfError> {
        Ok(match self {
            HData::Expr(e) => e.eval(t)?,
            HData::Grid(g) => g.eval(t)?,
        })
    }
}

/// f(t) − Σ f(δᵢ(t)) = h(t) on I, f′(c) = μ.
#[derive(Debug, Clone)]
pub struct IvpProblem {
    pub pconf: PConfiguration,
    pub h: HData,
    pub c: f64,
    pub mu: f64,
    /// Tolerance of the compatibility condition h(a₀) = h(a_N).
    pub tol: f64,
}

impl IvpProblem {
    pub fn new(pconf: PConfiguration, h: HData, c: f64, mu: f64) -> Self {
        IvpProblem {
            pconf,
            h,
            c,
            mu,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvpDiagnostics {
    /// sup over nodes of |f − Σ f∘δᵢ − h|.
    pub residual: f64,
    /// |discrete f′(c) − μ|.
    pub derivative_defect: f64,
    /// |Σ_{i=1}^{N−1} f(aᵢ) + h(a₀)|: substituting t = a₀ gives
    /// −Σ_{i=1}^{N−1} f(aᵢ) = h(a₀).
    pub anchor_identity_defect: f64,
    /// (max|Rᵢᵢ| / min|Rᵢᵢ|)² for the dense solve.
    pub condition_estimate: Option<f64>,
    pub grid: usize,
    pub method: &'static str,
}

type Row = Vec<(usize, f64)>;

/// Collocation least-squares solve on an M-interval grid.
///
/// Row j reads f(t_j) − Σᵢ f(δᵢ(t_j)) = h(t_j) with f(δᵢ(t_j)) taken from the
/// four-point Lagrange interpolant of the nodal values; the extra row is the
/// central difference (f(c+h) − f(c−h))/2h = μ (one-sided near the ends).
pub fn solve_ivp(problem: &IvpProblem, m: usize) -> Result<(GridFunction, IvpDiagnostics), PconfError> {
    let pconf = &problem.pconf;
    let (a0, an) = pconf.interval();
    if m < 4 {
        return Err(PconfError::Shape("the collocation grid needs M >= 4".into()));
    }
    if !(problem.c >= a0 && problem.c <= an) {
        return Err(PconfError::Shape(format!("c = {} lies outside [{a0}, {an}]", problem.c)));
    }
    let (left, right) = (problem.h.eval(a0)?, problem.h.eval(an)?);
    if !((left - right).abs() < problem.tol) {
        return Err(PconfError::DataMismatch { left, right });
    }

    let space = StateSpace::Interval { a: a0, b: an };
    let template = GridFunction::constant(space, m, 0.0)?;
    let nodes = template.nodes();
    let h_nodes: Vec<f64> = nodes.iter().map(|&t| problem.h.eval(t)).collect::<Result<_, _>>()?;

    let interp = |x: f64| -> Result<Row, PconfError> {
        let (k, w) = template.locate(x)?;
        Ok(cubic_weights(k, w, m))
    };
    let mut rows: Vec<Row> = nodes
        .par_iter()
        .enumerate()
        .map(|(j, &t)| -> Result<Row, PconfError> {
            let mut row = vec![(j, 1.0)];
            for i in 0..pconf.len() {
                let y = crate::funceq::checked_image(&pconf.system, i, t)?;
                for (k, w) in interp(y)? {
                    row.push((k, -w));
                }
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let step = template.step();
    let c = problem.c;
    // (f(c+h) − f(c−h))/2h, or the second-order one-sided stencil over the
    // same width when c is within one step of an end
    let stencil: [(f64, f64); 3] = if c - step < a0 {
        [(c, -3.0), (c + step, 4.0), (c + 2.0 * step, -1.0)]
    } else if c + step > an {
        [(c, 3.0), (c - step, -4.0), (c - 2.0 * step, 1.0)]
    } else {
        [(c + step, 1.0), (c - step, -1.0), (c, 0.0)]
    };
    let mut drow = Vec::new();
    for (x, coef) in stencil {
        if coef != 0.0 {
            for (k, w) in interp(x)? {
                drow.push((k, coef * w / (2.0 * step)));
            }
        }
    }
    rows.push(drow);
    let mut rhs = h_nodes.clone();
    rhs.push(problem.mu);

    let (values, condition_estimate, method) = if m <= DENSE_LIMIT {
        let (x, cond) = dense_lstsq(&rows, &rhs, m + 1)?;
        (x, Some(cond), "qr")
    } else {
        (cgls(&rows, &rhs, m + 1)?, None, "cgls")
    };
    let f = GridFunction::new(space, values)?;

    let apply = |row: &Row| row.iter().map(|&(k, w)| w * f.values[k]).sum::<f64>();
    let residual = rows[..=m]
        .iter()
        .zip(&h_nodes)
        .fold(0.0f64, |r, (row, h)| r.max((apply(row) - h).abs()));
    let derivative_defect = (apply(&rows[m + 1]) - problem.mu).abs();
    let mut anchor_sum = 0.0;
    for &a in &pconf.anchors[1..pconf.len()] {
        anchor_sum += f.eval(a)?;
    }
    let anchor_identity_defect = (anchor_sum + left).abs();
    Ok((
        f,
        IvpDiagnostics {
            residual,
            derivative_defect,
            anchor_identity_defect,
            condition_estimate,
            grid: m,
            method,
        },
    ))
}

fn dense_lstsq(rows: &[Row], rhs: &[f64], cols: usize) -> Result<(Vec<f64>, f64), PconfError> {
    let mut a = DMatrix::<f64>::zeros(rows.len(), cols);
    for (r, row) in rows.iter().enumerate() {
        for &(k, w) in row {
            a[(r, k)] += w;
        }
    }
    let qr = a.qr();
    let mut b = DVector::from_column_slice(rhs);
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let diag = r.diagonal().map(f64::abs);
    let estimate = (diag.max() / diag.min()).powi(2);
    if !(estimate <= CONDITION_CAP) {
        return Err(PconfError::IllConditioned {
            estimate,
            cap: CONDITION_CAP,
        });
    }
    let x = r
        .solve_upper_triangular(&b.rows(0, cols).into_owned())
        .ok_or(PconfError::IllConditioned {
            estimate: f64::INFINITY,
            cap: CONDITION_CAP,
        })?;
    Ok((x.iter().copied().collect(), estimate))
}

/// Conjugate gradients on the normal equations, using only the sparse rows.
fn cgls(rows: &[Row], rhs: &[f64], cols: usize) -> Result<Vec<f64>, PconfError> {
    let mul = |x: &[f64]| -> Vec<f64> { rows.par_iter().map(|row| row.iter().map(|&(k, w)| w * x[k]).sum()).collect() };
    let mul_t = |y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cols];
        for (row, &yr) in rows.iter().zip(y) {
            for &(k, w) in row {
                out[k] += w * yr;
            }
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; cols];
    let mut r = rhs.to_vec();
    let mut s = mul_t(&r);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let stop = 1e-28 * gamma.max(f64::MIN_POSITIVE);
    let max_iter = 50 * cols;
    for _ in 0..max_iter {
        if gamma <= stop {
            return Ok(x);
        }
        let q = mul(&p);
        let alpha = gamma / dot(&q, &q);
        for k in 0..cols {
            x[k] += alpha * p[k];
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = mul_t(&r);
        let next = dot(&s, &s);
        let beta = next / gamma;
        gamma = next;
        for k in 0..cols {
            p[k] = s[k] + beta * p[k];
        }
    }
    Err(PconfError::NoConvergence(max_iter))
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::exprlang::parse;

    fn problem(pconf: PConfiguration, h: &str, c: f64, mu: f64) -> IvpProblem {
        IvpProblem::new(pconf, HData::Expr(parse(h).unwrap()), c, mu)
    }

    #[test]
    fn linear_solution() {
        let (f, d) = solve_ivp(&problem(standard(), "0", 0.0, 1.0), 256).unwrap();
        assert!(f.sup_error(|t| t) < 1e-8, "{d:?}");
    }

    #[test]
    fn quadratic_solution() {
        let (f, d) = solve_ivp(&problem(standard(), "(t^2-1)/2", 0.0, 0.0), 1024).unwrap();
        assert!(f.sup_error(|t| t * t) < 1e-6, "{} {d:?}", f.sup_error(|t| t * t));
        assert!(d.anchor_identity_defect < 10.0 * d.residual.max(1e-15));
    }

    #[test]
    fn incompatible_data() {
        assert!(matches!(
            solve_ivp(&problem(standard(), "t", 0.0, 0.0), 64),
            Err(PconfError::DataMismatch { .. })
        ));
    }

    #[test]
    fn homogeneous_problem_is_trivial() {
        let (f, d) = solve_ivp(&problem(standard(), "0", 0.0, 0.0), 128).unwrap();
        assert!(f.sup_norm() <= 10.0 * d.residual.max(1e-14));
    }

    #[test]
    fn three_map_configuration() {
        // f* = t², Σδᵢ = t + 3: h = t² − Σ (t/3 + i−1)² = (2/3)t² − 2t − 5
        let (f, d) = solve_ivp(&problem(three_maps(), "2*t^2/3 - 2*t - 5", 0.0, 0.0), 512).unwrap();
        assert!(f.sup_error(|t| t * t) < 1e-4, "{} {d:?}", f.sup_error(|t| t * t));
    }

    #[test]
    fn large_grids_use_cgls() {
        let p = problem(standard(), "(t^2-1)/2", 0.0, 0.0);
        let (f, d) = solve_ivp(&p, 4096).unwrap();
        assert_eq!(d.method, "cgls");
        assert!(f.sup_error(|t| t * t) < 1e-6, "{}", f.sup_error(|t| t * t));
    }

    #[test]
    fn cubic_weights_reproduce_cubics() {
        for &(k, w) in &[(0usize, 0.3), (5, 0.5), (9, 0.75)] {
            let s = k as f64 + w;
            let v: f64 = cubic_weights(k, w, 10).iter().map(|&(j, c)| c * (j as f64).powi(3)).sum();
            assert!((v - s.powi(3)).abs() < 1e-12);
        }
    }
}
