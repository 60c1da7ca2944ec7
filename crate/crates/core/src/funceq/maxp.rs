use nalgebra::DMatrix;
use serde::Serialize;

use super::{apply_operator, checked_image, FunceqError, FunceqSystem, GridFunction};
use crate::exprlang::{parse, Expression};
use crate::gds::{guided_orbit_set, GuidedSystem, OrbitOptions};

/// Depth of the orbit clouds explored from the extremal points.
pub const MAX_PRINCIPLE_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub max: f64,
    pub argmax: f64,
    pub min: f64,
    pub argmin: f64,
    /// sup |f − A f| over the grid.
    pub residual: f64,
    pub max_cloud_size: usize,
    pub min_cloud_size: usize,
    /// Largest amount by which f drops below its max (or rises above its
    /// min) on the corresponding orbit cloud.
    pub worst_violation: f64,
    pub tol: f64,
    pub passed: bool,
}

fn check_scalar_coefficients(sys: &FunceqSystem, nodes: &[f64], tol: f64) -> Result<(), FunceqError> {
    for &x in nodes {
        let mut sum = 0.0;
        for i in 0..sys.system.len() {
            let a = sys.coeff(i, x)?;
            if a < -tol {
                return Err(FunceqError::HypothesisFailure {
                    condition: format!("a_{i} >= 0"),
                    x,
                });
            }
            if a <= 0.0 && sys.system.is_allowed(i, x) {
                return Err(FunceqError::HypothesisFailure {
                    condition: format!("a_{i} > 0 off its guiding set"),
                    x,
                });
            }
            sum += a;
        }
        if (sum - 1.0).abs() > tol {
            return Err(FunceqError::HypothesisFailure {
                condition: format!("sum of coefficients = 1 (got {sum})"),
                x,
            });
        }
    }
    Ok(())
}

/// Checks that an (approximate) solution of f = A f keeps its extremal values
/// along the guided orbits of its extremal points.
pub fn check_max_principle(sys: &FunceqSystem, f: &GridFunction, tol: f64) -> Result<MaxPrincipleReport, FunceqError> {
    if f.space != sys.system.space {
        return Err(FunceqError::Shape("function and system live on different spaces".into()));
    }
    let nodes = f.nodes();
    check_scalar_coefficients(sys, &nodes, tol)?;
    let af = apply_operator(sys, f)?;
    let residual = f.sup_distance(&af);
    if residual > tol {
        return Err(FunceqError::NotASolution { residual, tol });
    }

    let (mut jmax, mut jmin) = (0, 0);
    for (j, &v) in f.values.iter().enumerate() {
        if v > f.values[jmax] {
            jmax = j;
        }
        if v < f.values[jmin] {
            jmin = j;
        }
    }
    let (max, min) = (f.values[jmax], f.values[jmin]);
    let opts = OrbitOptions::default();
    let eps = f.step();

    let max_cloud = guided_orbit_set(&sys.system, nodes[jmax], MAX_PRINCIPLE_DEPTH, eps, &opts);
    let min_cloud = guided_orbit_set(&sys.system, nodes[jmin], MAX_PRINCIPLE_DEPTH, eps, &opts);
    let mut worst = 0.0f64;
    for &(x, _) in &max_cloud.points {
        worst = worst.max(max - f.eval(x)?);
    }
    for &(x, _) in &min_cloud.points {
        worst = worst.max(f.eval(x)? - min);
    }
    Ok(MaxPrincipleReport {
        max,
        argmax: nodes[jmax],
        min,
        argmin: nodes[jmin],
        residual,
        max_cloud_size: max_cloud.points.len(),
        min_cloud_size: min_cloud.points.len(),
        worst_violation: worst,
        tol,
        passed: worst <= tol,
    })
}

/// N matrix-valued coefficients Aᵢ(x) of size n×n, optionally with a constant
/// P such that P⁻¹ Aᵢ(x) P is lower triangular.
#[derive(Debug, Clone)]
pub struct TriangularFamily {
    pub matrices: Vec<Vec<Vec<Expression>>>,
    pub dim: usize,
    pub conjugator: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl TriangularFamily {
    pub fn new(matrices: Vec<Vec<Vec<Expression>>>, p: Option<DMatrix<f64>>) -> Result<Self, FunceqError> {
        let dim = matrices.first().map_or(0, |m| m.len());
        if dim == 0 {
            return Err(FunceqError::Shape("a family needs at least one non-empty matrix".into()));
        }
        if matrices.iter().any(|m| m.len() != dim || m.iter().any(|row| row.len() != dim)) {
            return Err(FunceqError::Shape(format!("every matrix must be {dim}x{dim}")));
        }
        let conjugator = match p {
            None => None,
            Some(p) => {
                if p.nrows() != dim || p.ncols() != dim {
                    return Err(FunceqError::Shape(format!("P must be {dim}x{dim}")));
                }
                let inv = p
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| FunceqError::Shape("P is singular".into()))?;
                Some((p, inv))
            }
        };
        Ok(TriangularFamily {
            matrices,
            dim,
            conjugator,
        })
    }

    /// Builds a family from entry sources in the variable `t`.
    pub fn parse(entries: &[Vec<Vec<&str>>], p: Option<DMatrix<f64>>) -> Result<Self, FunceqError> {
        let mut matrices = Vec::with_capacity(entries.len());
        for m in entries {
            let mut rows = Vec::with_capacity(m.len());
            for row in m {
                let mut parsed = Vec::with_capacity(row.len());
                for src in row {
                    parsed.push(parse(src).map_err(|e| FunceqError::Shape(format!("entry {src:?}: {e}")))?);
                }
                rows.push(parsed);
            }
            matrices.push(rows);
        }
        Self::new(matrices, p)
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn eval(&self, i: usize, x: f64) -> Result<DMatrix<f64>, FunceqError> {
        let n = self.dim;
        let mut out = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = self.matrices[i][r][c].eval(x)?;
            }
        }
        Ok(out)
    }

    /// Tᵢ(x) = P⁻¹ Aᵢ(x) P, or Aᵢ(x) itself without a conjugator.
    pub fn triangular(&self, i: usize, x: f64) -> Result<DMatrix<f64>, FunceqError> {
        let a = self.eval(i, x)?;
        Ok(match &self.conjugator {
            Some((p, inv)) => inv * a * p,
            None => a,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangularReport {
    pub samples: usize,
    pub dim: usize,
    /// Largest |entry| above the diagonal of any Tᵢ(x).
    pub max_upper: f64,
    /// Largest entry of |Σ Aᵢ(x) − I|.
    pub max_sum_defect: f64,
    pub min_diagonal: f64,
    /// Smallest det Aᵢ(x) over samples outside Λᵢ.
    pub min_det_off_guiding: f64,
}

/// Checks the hypotheses of the vector maximum principle at `samples` points.
pub fn check_triangular_family(
    family: &TriangularFamily,
    sys: &GuidedSystem,
    samples: usize,
    tol: f64,
) -> Result<TriangularReport, FunceqError> {
    if family.len() != sys.len() {
        return Err(FunceqError::Shape(format!(
            "{} matrices for {} generators",
            family.len(),
            sys.len()
        )));
    }
    let n = family.dim;
    let mut report = TriangularReport {
        samples,
        dim: n,
        max_upper: 0.0,
        max_sum_defect: 0.0,
        min_diagonal: f64::INFINITY,
        min_det_off_guiding: f64::INFINITY,
    };
    for x in sys.space.sample_points(samples) {
        let mut sum = DMatrix::<f64>::zeros(n, n);
        for i in 0..family.len() {
            let a = family.eval(i, x)?;
            let t = family.triangular(i, x)?;
            for r in 0..n {
                for c in r + 1..n {
                    report.max_upper = report.max_upper.max(t[(r, c)].abs());
                }
            }
            if report.max_upper > tol {
                let condition = if n == 2 && discriminant(&a) < -tol {
                    format!("A_{i} has non-real eigenvalues, so no real constant P triangulates it")
                } else {
                    format!("T_{i} is lower triangular")
                };
                return Err(FunceqError::HypothesisFailure { condition, x });
            }
            for r in 0..n {
                report.min_diagonal = report.min_diagonal.min(t[(r, r)]);
            }
            if report.min_diagonal < -tol {
                return Err(FunceqError::HypothesisFailure {
                    condition: format!("diagonal of T_{i} is non-negative"),
                    x,
                });
            }
            if sys.is_allowed(i, x) {
                let det = a.determinant();
                report.min_det_off_guiding = report.min_det_off_guiding.min(det);
                if det <= 0.0 {
                    return Err(FunceqError::HypothesisFailure {
                        condition: format!("det A_{i} > 0 off its guiding set (got {det})"),
                        x,
                    });
                }
            }
            sum += a;
        }
        let defect = (sum - DMatrix::<f64>::identity(n, n)).amax();
        report.max_sum_defect = report.max_sum_defect.max(defect);
        if defect > tol {
            return Err(FunceqError::HypothesisFailure {
                condition: format!("sum of A_i = I (defect {defect})"),
                x,
            });
        }
    }
    Ok(report)
}

fn discriminant(a: &DMatrix<f64>) -> f64 {
    let tr = a[(0, 0)] + a[(1, 1)];
    tr * tr - 4.0 * a.determinant()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub hypotheses: TriangularReport,
    /// sup over nodes of |F − Σ Aᵢ F∘δᵢ| (max norm over components).
    pub residual: f64,
    /// Mean and max − min of each component of P⁻¹F, in proof order.
    pub constants: Vec<f64>,
    pub spreads: Vec<f64>,
    /// First component (0-based) whose spread exceeds tol.
    pub first_nonconstant: Option<usize>,
    pub passed: bool,
}

/// Verifies that a solution F of F = Σ Aᵢ · F∘δᵢ is constant, component by
/// component of P⁻¹F.
pub fn verify_triangular_uniqueness(
    family: &TriangularFamily,
    sys: &GuidedSystem,
    f: &[GridFunction],
    tol: f64,
) -> Result<UniquenessReport, FunceqError> {
    let n = family.dim;
    if f.len() != n {
        return Err(FunceqError::Shape(format!("F has {} components, expected {n}", f.len())));
    }
    let m = f[0].m();
    if f.iter().any(|g| g.m() != m || g.space != sys.space) {
        return Err(FunceqError::Shape("components must share the system's grid".into()));
    }
    let hypotheses = check_triangular_family(family, sys, m + 1, tol)?;

    let nodes = f[0].nodes();
    let at = |x: f64| -> Result<nalgebra::DVector<f64>, FunceqError> {
        let mut v = nalgebra::DVector::zeros(n);
        for k in 0..n {
            v[k] = f[k].eval(x)?;
        }
        Ok(v)
    };
    let mut residual = 0.0f64;
    let mut g = vec![Vec::with_capacity(m + 1); n];
    for &x in &nodes {
        let fx = at(x)?;
        let mut r = fx.clone();
        for i in 0..family.len() {
            r -= family.eval(i, x)? * at(checked_image(sys, i, x)?)?;
        }
        residual = residual.max(r.amax());
        let gx = match &family.conjugator {
            Some((_, inv)) => inv * fx,
            None => fx,
        };
        for k in 0..n {
            g[k].push(gx[k]);
        }
    }
    if residual > tol {
        return Err(FunceqError::NotASolution { residual, tol });
    }
    let mut constants = Vec::with_capacity(n);
    let mut spreads = Vec::with_capacity(n);
    let mut first_nonconstant = None;
    for (k, comp) in g.iter().enumerate() {
        let hi = comp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = comp.iter().copied().fold(f64::INFINITY, f64::min);
        constants.push(comp.iter().sum::<f64>() / comp.len() as f64);
        spreads.push(hi - lo);
        if hi - lo > tol && first_nonconstant.is_none() {
            first_nonconstant = Some(k);
        }
    }
    Ok(UniquenessReport {
        hypotheses,
        residual,
        constants,
        spreads,
        passed: first_nonconstant.is_none(),
        first_nonconstant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gds::testing::{circle_system, expr_maps};
    use crate::gds::StateSpace;

    fn example_circle() -> FunceqSystem {
        let sys = circle_system(1.0 / 3.0, 2.0 / 3.0)
            .with_coeffs(vec![parse("sin(t)^2").unwrap(), parse("cos(t)^2").unwrap()])
            .unwrap();
        FunceqSystem::new(sys).unwrap()
    }

    #[test]
    fn periodic_solution_keeps_its_max_on_orbits() {
        let sys = example_circle();
        let f = GridFunction::from_fn(StateSpace::circle(), 300, |t| (3.0 * t).cos()).unwrap();
        let rep = check_max_principle(&sys, &f, 1e-9).unwrap();
        assert!(rep.passed, "{rep:?}");
        // the cloud is {0, 2π/3, 4π/3} up to roundoff near-duplicates
        assert!(rep.max_cloud_size >= 3 && rep.max_cloud_size <= 6);
        assert!(rep.worst_violation < 1e-12);
    }

    #[test]
    fn constants_and_non_solutions() {
        let sys = example_circle();
        let c = GridFunction::constant(StateSpace::circle(), 64, 2.5).unwrap();
        assert!(check_max_principle(&sys, &c, 1e-9).unwrap().passed);
        let f = GridFunction::from_fn(StateSpace::circle(), 64, |t| t.sin()).unwrap();
        assert!(matches!(
            check_max_principle(&sys, &f, 1e-9),
            Err(FunceqError::NotASolution { .. })
        ));
    }

    #[test]
    fn coefficient_sum_is_checked() {
        let sys = circle_system(1.0 / 3.0, 2.0 / 3.0)
            .with_coeffs(vec![parse("sin(t)^2/2").unwrap(), parse("cos(t)^2").unwrap()])
            .unwrap();
        let c = GridFunction::constant(StateSpace::circle(), 64, 1.0).unwrap();
        assert!(matches!(
            check_max_principle(&FunceqSystem::new(sys).unwrap(), &c, 1e-9),
            Err(FunceqError::HypothesisFailure { .. })
        ));
    }

    fn l1_setup() -> (TriangularFamily, GuidedSystem) {
        let fam = TriangularFamily::parse(
            &[
                vec![vec!["1/2", "0"], vec!["cos(t)/4", "1/3"]],
                vec![vec!["1/2", "0"], vec!["-cos(t)/4", "2/3"]],
            ],
            None,
        )
        .unwrap();
        let sys = GuidedSystem::unguided(StateSpace::Interval { a: -1.0, b: 1.0 }, expr_maps(&["t/3", "2*t/3"])).unwrap();
        (fam, sys)
    }

    #[test]
    fn transposed_differentials_pass() {
        let (fam, sys) = l1_setup();
        let rep = check_triangular_family(&fam, &sys, 101, 1e-12).unwrap();
        assert!(rep.max_sum_defect < 1e-15);
        assert_eq!(rep.max_upper, 0.0);
        assert!(rep.min_det_off_guiding > 0.0);
        let f = [
            GridFunction::constant(sys.space, 100, 0.7).unwrap(),
            GridFunction::constant(sys.space, 100, -1.2).unwrap(),
        ];
        let u = verify_triangular_uniqueness(&fam, &sys, &f, 1e-10).unwrap();
        assert!(u.passed);
        assert!((u.constants[1] + 1.2).abs() < 1e-14);
    }

    #[test]
    fn rotations_are_refused() {
        let fam = TriangularFamily::parse(
            &[
                vec![vec!["cos(pi/3)", "sin(pi/3)"], vec!["-sin(pi/3)", "cos(pi/3)"]],
                vec![vec!["cos(pi/3)", "-sin(pi/3)"], vec!["sin(pi/3)", "cos(pi/3)"]],
            ],
            None,
        )
        .unwrap();
        let sys = GuidedSystem::unguided(StateSpace::circle(), expr_maps(&["t - pi/3", "t + pi/3"])).unwrap();
        match check_triangular_family(&fam, &sys, 16, 1e-9) {
            Err(FunceqError::HypothesisFailure { condition, .. }) => assert!(condition.contains("non-real")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conjugated_family() {
        // Aᵢ = P Tᵢ P⁻¹ with constant lower-triangular Tᵢ
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let fam = TriangularFamily::parse(
            &[
                vec![vec!["0.625", "-0.375"], vec!["0.125", "0.125"]],
                vec![vec!["0.375", "0.375"], vec!["-0.125", "0.875"]],
            ],
            Some(p.clone()),
        )
        .unwrap();
        let sys = GuidedSystem::unguided(StateSpace::Interval { a: 0.0, b: 1.0 }, expr_maps(&["t/2", "(t+1)/2"])).unwrap();
        let rep = check_triangular_family(&fam, &sys, 11, 1e-12).unwrap();
        assert!(rep.max_upper < 1e-15);
        let without = TriangularFamily::new(fam.matrices.clone(), None).unwrap();
        assert!(check_triangular_family(&without, &sys, 11, 1e-12).is_err());
    }

    #[test]
    fn non_constant_component_is_located() {
        let (fam, sys) = l1_setup();
        let f = [
            GridFunction::constant(sys.space, 50, 1.0).unwrap(),
            GridFunction::from_fn(sys.space, 50, |t| t).unwrap(),
        ];
        assert!(matches!(
            verify_triangular_uniqueness(&fam, &sys, &f, 1e-10),
            Err(FunceqError::NotASolution { .. })
        ));
    }
}
