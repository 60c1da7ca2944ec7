use nalgebra::DMatrix;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Roots of the characteristic polynomial of a symmetric matrix with n ≤ 3,
/// ascending; `None` for larger matrices.
pub fn closed_form_symmetric_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let mut ev = match m.nrows() {
        1 => vec![m[(0, 0)]],
        2 => {
            let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
            let half = 0.5 * (m[(0, 0)] - m[(1, 1)]);
            let r = half.hypot(m[(0, 1)]);
            vec![mean - r, mean + r]
        }
        3 => {
            // trigonometric solution of the depressed cubic for B = (A − qI)/p
            let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
            let q = m.trace() / 3.0;
            if p1 == 0.0 {
                vec![m[(0, 0)], m[(1, 1)], m[(2, 2)]]
            } else {
                let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                let b = (m - DMatrix::identity(3, 3) * q) / p;
                let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                let third = 2.0 * std::f64::consts::PI / 3.0;
                let e1 = q + 2.0 * p * phi.cos();
                let e3 = q + 2.0 * p * (phi + third).cos();
                vec![e1, 3.0 * q - e1 - e3, e3]
            }
        }
        _ => return None,
    };
    ev.sort_by(f64::total_cmp);
    Some(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods_agree() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]);
        let j = jacobi_eigenvalues(&m);
        let c = closed_form_symmetric_eigenvalues(&m).unwrap();
        let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for k in 0..3 {
            assert!((j[k] - reference[k]).abs() < 1e-12);
            assert!((c[k] - reference[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(closed_form_symmetric_eigenvalues(&m).unwrap(), vec![1.0, 3.0]);
        let j = jacobi_eigenvalues(&m);
        assert!((j[0] - 1.0).abs() < 1e-14 && (j[1] - 3.0).abs() < 1e-14);
        assert!(closed_form_symmetric_eigenvalues(&DMatrix::identity(4, 4)).is_none());
    }
}
