use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::eigen::{closed_form_symmetric_eigenvalues, jacobi_eigenvalues};
use super::CauchyError;

const SYMMETRY_TOL: f64 = 1e-10;
const COMMUTATION_TOL: f64 = 1e-10;
const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_MAX_ITER: usize = 1_000_000;
const SAMPLE_BOX: f64 = 10.0;

/// K_m = B̄(d̃₁, m) ∪ B̄(d̃₂, m), invariant under both δᵢ for every m ≥ N.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallFamily {
    pub centers: [Vec<f64>; 2],
    pub min_radius: usize,
}

impl BallFamily {
    pub fn contains(&self, m: f64, x: &[f64]) -> bool {
        self.centers.iter().any(|c| {
            let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            d2.sqrt() <= m
        })
    }
}

/// f(T₁x + T₂x) = f(T₁x) + f(T₂x) with Tᵢx = Aᵢx + bᵢ, rewritten as
/// f(y) = f(δ₁y) + f(δ₂y), δᵢ(y) = Bᵢy + dᵢ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineCauchyAnalysis {
    pub dim: usize,
    pub a: [DMatrix<f64>; 2],
    pub b: [DVector<f64>; 2],
    /// Ascending eigenvalues of A₁, A₂ (Jacobi).
    pub eigenvalues: [Vec<f64>; 2],
    /// Aᵢ(A₁ + A₂)⁻¹.
    pub bmat: [DMatrix<f64>; 2],
    /// Bᵢ(−b₁ − b₂) + bᵢ.
    pub d: [DVector<f64>; 2],
    /// Fixed points of δᵢ, Σₖ Bᵢᵏdᵢ.
    pub fixed: [DVector<f64>; 2],
    /// Largest eigenvalue of B₁ and B₂.
    pub gamma: f64,
    /// ⌈‖d̃₁ − d̃₂‖/(1 − γ)⌉ + 1.
    pub radius: usize,
    pub family: BallFamily,
    /// Fixed-point iterations used for d̃₁, d̃₂.
    pub iterations: [usize; 2],
}

impl AffineCauchyAnalysis {
    /// δᵢ(y) for i ∈ {0, 1}.
    pub fn delta(&self, i: usize, y: &DVector<f64>) -> DVector<f64> {
        &self.bmat[i] * y + &self.d[i]
    }

    pub fn t(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.a[i] * x + &self.b[i]
    }
}

fn eigen_checked(m: &DMatrix<f64>, name: &str) -> Result<Vec<f64>, CauchyError> {
    let ev = jacobi_eigenvalues(m);
    if let Some(closed) = closed_form_symmetric_eigenvalues(m) {
        let scale = 1.0 + m.norm();
        if ev.iter().zip(&closed).any(|(x, y)| (x - y).abs() > 1e-9 * scale) {
            return Err(CauchyError::Shape(format!(
                "eigenvalue methods disagree for {name}: {ev:?} vs {closed:?}"
            )));
        }
    }
    Ok(ev)
}

fn fixed_point(b: &DMatrix<f64>, d: &DVector<f64>) -> Result<(DVector<f64>, usize), CauchyError> {
    let residual = |x: &DVector<f64>| (b * x + d - x).norm();
    let mut x = DVector::zeros(d.len());
    for k in 1..=FIXED_POINT_MAX_ITER {
        let next = b * &x + d;
        let change = (&next - &x).norm();
        x = next;
        if change <= FIXED_POINT_TOL * (1.0 + x.norm()) {
            // the iteration can stall an ulp short; (I − B)x = d lands exactly
            let eye = DMatrix::identity(d.len(), d.len());
            if let Some(direct) = (eye - b).lu().solve(d) {
                if residual(&direct) <= residual(&x) {
                    x = direct;
                }
            }
            return Ok((x, k));
        }
    }
    Err(CauchyError::NoConvergence(FIXED_POINT_MAX_ITER))
}

/// Gates on symmetry, commutation and positive definiteness, then derives
/// Bᵢ, dᵢ, d̃ᵢ, γ and the radius bound N.
pub fn analyze_affine(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    b1: &DVector<f64>,
    b2: &DVector<f64>,
) -> Result<AffineCauchyAnalysis, CauchyError> {
    let n = a1.nrows();
    if n == 0 || !a1.is_square() || a2.shape() != (n, n) || b1.len() != n || b2.len() != n {
        return Err(CauchyError::Shape("A₁, A₂ must be n×n and b₁, b₂ of length n".into()));
    }
    for (name, m) in [("A₁", a1), ("A₂", a2)] {
        if (m - m.transpose()).norm() >= SYMMETRY_TOL {
            return Err(CauchyError::hypothesis(format!("symmetry of {name}"), None));
        }
    }
    let comm = (a1 * a2 - a2 * a1).norm();
    if comm >= COMMUTATION_TOL {
        return Err(CauchyError::hypothesis(format!("commutation (‖A₁A₂ − A₂A₁‖ = {comm:e})"), None));
    }
    let e1 = eigen_checked(a1, "A₁")?;
    let e2 = eigen_checked(a2, "A₂")?;
    for (name, ev) in [("A₁", &e1), ("A₂", &e2)] {
        if !(ev[0] > 0.0) {
            return Err(CauchyError::hypothesis(
                format!("positive definiteness of {name}"),
                Some(ev[0]),
            ));
        }
    }
    let sum_inv = (a1 + a2)
        .try_inverse()
        .ok_or_else(|| CauchyError::hypothesis("A₁ + A₂ is singular", None))?;
    let bm = [a1 * &sum_inv, a2 * &sum_inv];
    let shift = -(b1 + b2);
    let d = [&bm[0] * &shift + b1, &bm[1] * &shift + b2];
    let (f1, k1) = fixed_point(&bm[0], &d[0])?;
    let (f2, k2) = fixed_point(&bm[1], &d[1])?;
    // commuting symmetric Aᵢ make Bᵢ symmetric; symmetrize away roundoff
    let gamma = bm
        .iter()
        .map(|m| *jacobi_eigenvalues(&((m + m.transpose()) * 0.5)).last().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(gamma < 1.0) {
        return Err(CauchyError::hypothesis(format!("contraction factor γ = {gamma} is not below 1"), None));
    }
    let radius = ((&f1 - &f2).norm() / (1.0 - gamma)).ceil() as usize + 1;
    Ok(AffineCauchyAnalysis {
        dim: n,
        a: [a1.clone(), a2.clone()],
        b: [b1.clone(), b2.clone()],
        eigenvalues: [e1, e2],
        family: BallFamily {
            centers: [f1.iter().copied().collect(), f2.iter().copied().collect()],
            min_radius: radius,
        },
        bmat: bm,
        d,
        fixed: [f1, f2],
        gamma,
        radius,
        iterations: [k1, k2],
    })
}

/// Geometric-mean contraction ratio of ‖δᵢᵏ(y) − d̃ᵢ‖ over `steps` steps.
pub fn orbit_rate(analysis: &AffineCauchyAnalysis, i: usize, y0: &DVector<f64>, steps: usize) -> f64 {
    let target = &analysis.fixed[i];
    let start = (y0 - target).norm();
    let mut y = y0.clone();
    for _ in 0..steps {
        y = analysis.delta(i, &y);
    }
    ((&y - target).norm() / start).powf(1.0 / steps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub samples: usize,
    /// sup |f(T₁x + T₂x) − f(T₁x) − f(T₂x)|.
    pub residual: f64,
    pub worst_point: Vec<f64>,
}

/// Residual of the Cauchy-type equation for arbitrary f, T₁, T₂ at the given points.
pub fn verify_cauchy_solution<F, T1, T2>(f: F, t1: T1, t2: T2, points: &[Vec<f64>]) -> ResidualReport
where
    F: Fn(&[f64]) -> f64,
    T1: Fn(&[f64]) -> Vec<f64>,
    T2: Fn(&[f64]) -> Vec<f64>,
{
    let mut report = ResidualReport {
        samples: points.len(),
        residual: 0.0,
        worst_point: Vec::new(),
    };
    for x in points {
        let (y1, y2) = (t1(x), t2(x));
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| p + q).collect();
        let r = (f(&sum) - f(&y1) - f(&y2)).abs();
        if !(r <= report.residual) {
            report.residual = r;
            report.worst_point = x.clone();
        }
    }
    report
}

/// Residual of f(x) = c·x at `samples` uniform points of [−10, 10]ⁿ.
pub fn verify_linear_solution(analysis: &AffineCauchyAnalysis, c: &[f64], samples: usize, seed: u64) -> ResidualReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..analysis.dim).map(|_| rng.gen_range(-SAMPLE_BOX..=SAMPLE_BOX)).collect())
        .collect();
    let apply = |i: usize| move |x: &[f64]| analysis.t(i, &DVector::from_column_slice(x)).iter().copied().collect();
    verify_cauchy_solution(
        |x| x.iter().zip(c).map(|(p, q)| p * q).sum(),
        apply(0),
        apply(1),
        &points,
    )
}

/// Residual of f(x) = c·x for the ℓ₁-ball pair
/// a₁(x, y) = (x/2 + sin(y)/4, y/3), a₂(x, y) = (x/2 − sin(y)/4, 2y/3)
/// at `samples` uniform points of the unit ℓ₁ ball.
pub fn verify_l1_ball(c: &[f64; 2], samples: usize, seed: u64) -> ResidualReport {
    let a1 = |x: &[f64]| vec![x[0] / 2.0 + x[1].sin() / 4.0, x[1] / 3.0];
    let a2 = |x: &[f64]| vec![x[0] / 2.0 - x[1].sin() / 4.0, 2.0 * x[1] / 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| loop {
            let p: Vec<f64> = vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            if p[0].abs() + p[1].abs() <= 1.0 {
                break p;
            }
        })
        .collect();
    verify_cauchy_solution(|x| c[0] * x[0] + c[1] * x[1], a1, a2, &points)
}
