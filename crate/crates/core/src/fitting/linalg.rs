//! Small dense solves for the normal equations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solve `a x = b` for a square row-major `a` by Gaussian elimination with
/// partial pivoting. `a` and `b` are overwritten.
pub fn solve<T: Scalar>(a: &mut [T], b: &mut [T]) -> Result<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(max > T::zero()) || !max.is_finite() {
            return Err(Error::RankDeficient(format!("zero pivot in column {col}")));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                a[r * n + k] = a[r * n + k] - f * a[col * n + k];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in (r + 1)..n {
            s = s - a[r * n + k] * x[k];
        }
        x[r] = s / a[r * n + r];
    }
    Ok(x)
}

/// Numerical rank test of a symmetric positive semi-definite matrix.
///
/// The matrix is scaled to unit diagonal and factored by Cholesky; a pivot
/// below `rel_tol` marks it as rank deficient.
pub fn is_rank_deficient<T: Scalar>(m: &[T], n: usize, rel_tol: T) -> bool {
    let diag: Vec<T> = (0..n).map(|i| m[i * n + i]).collect();
    if diag.iter().any(|d| !(*d > T::zero()) || !d.is_finite()) {
        return true;
    }
    let mut c: Vec<T> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            m[k] / (diag[i] * diag[j]).sqrt()
        })
        .collect();
    for j in 0..n {
        let mut d = c[j * n + j];
        for k in 0..j {
            d = d - c[j * n + k] * c[j * n + k];
        }
        if !(d > rel_tol) {
            return true;
        }
        let d = d.sqrt();
        c[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = c[i * n + j];
            for k in 0..j {
                s = s - c[i * n + k] * c[j * n + k];
            }
            c[i * n + j] = s / d;
        }
    }
    false
}
