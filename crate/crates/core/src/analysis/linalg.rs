//! Small dense matrix helpers for the identity checks: Cholesky, LU-based
//! inverse and determinant. Row-major `n×n` storage.

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// `ln det` of an SPD matrix from its Cholesky factor.
pub fn log_det_from_cholesky(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum()
}

/// Inverse and determinant via Gauss-Jordan with partial pivoting.
pub fn invert_with_det(a: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[pivot * n + col].abs() {
                pivot = row;
            }
        }
        let pv = m[pivot * n + col];
        if pv.abs() < 1e-12 {
            return Err(Error::SingularMatrix { det: 0.0 });
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        det *= pv;
        let inv_pv = 1.0 / pv;
        for j in 0..n {
            m[col * n + j] *= inv_pv;
            inv[col * n + j] *= inv_pv;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = m[row * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                m[row * n + j] -= factor * m[col * n + j];
                inv[row * n + j] -= factor * inv[col * n + j];
            }
        }
    }
    Ok((inv, det))
}

/// C = A·B for row-major n×n.
pub fn mat_mul_square(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// y = A·x.
pub fn mat_vec(a: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += a[i * n + j] * x[j];
        }
        y[i] = acc;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_identity() {
        let eye = [1.0, 0.0, 0.0, 1.0];
        let l = cholesky(&eye, 2).unwrap();
        assert_eq!(l, eye);
        assert_eq!(log_det_from_cholesky(&l, 2), 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(cholesky(&a, 2).is_err());
    }

    #[test]
    fn inverse_times_original_is_identity() {
        let a = [2.0, 1.0, 0.5, 1.0, -1.0, 0.25, 0.0, 3.0, 1.5];
        let (inv, det) = invert_with_det(&a, 3).unwrap();
        let prod = mat_mul_square(&a, &inv, 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - want).abs() < 1e-12);
            }
        }
        // det by cofactor expansion
        let want_det = 2.0 * (-1.0 * 1.5 - 0.25 * 3.0)
            - 1.0 * (1.0 * 1.5 - 0.25 * 0.0)
            + 0.5 * (1.0 * 3.0 - (-1.0) * 0.0);
        assert!((det - want_det).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(invert_with_det(&a, 2).is_err());
    }
}
