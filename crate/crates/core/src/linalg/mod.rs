//! Dense linear algebra kernel: matrices, SVD, pseudoinverse, norms,
//! symmetric eigenvalues, Cholesky and inversion.

mod mat;
mod svd;

pub use mat::{vec_ops, Mat};
pub use svd::{singular_values, svd, Svd};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Moore-Penrose pseudoinverse. Singular values at or below `tol` are treated
/// as zero.
pub fn pinv_with_tol<T: Scalar>(m: &Mat<T>, tol: T) -> Result<Mat<T>> {
    let (r, c) = m.shape();
    if m.is_empty() {
        return Ok(Mat::zeros(c, r));
    }
    let s = svd(m)?;
    let mut out = Mat::zeros(c, r);
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        if sigma <= tol {
            continue;
        }
        let inv = T::one() / sigma;
        for i in 0..c {
            let vik = s.v[(i, k)] * inv;
            for j in 0..r {
                out[(i, j)] = out[(i, j)] + vik * s.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Pseudoinverse with the default rank tolerance `max(rows, cols) * sigma_1 * RANK_FACTOR`.
pub fn pinv<T: Scalar>(m: &Mat<T>) -> Result<Mat<T>> {
    if m.is_empty() {
        return Ok(Mat::zeros(m.cols(), m.rows()));
    }
    let s = svd(m)?;
    pinv_with_tol(m, s.tolerance())
}

pub fn rank<T: Scalar>(m: &Mat<T>) -> Result<usize> {
    if m.is_empty() {
        return Ok(0);
    }
    let (values, tol) = singular_values(m)?;
    Ok(values.iter().filter(|&&s| s > tol).count())
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm<T: Scalar>(m: &Mat<T>) -> Result<T> {
    if m.is_empty() {
        return Ok(T::zero());
    }
    Ok(singular_values(m)?.0[0])
}

/// Infallible spectral norm for internally built finite matrices.
pub(crate) fn norm<T: Scalar>(m: &Mat<T>) -> T {
    spectral_norm(m).unwrap_or_else(|_| T::infinity())
}

/// Smallest singular value above the rank tolerance.
pub fn sigma_min_nonzero<T: Scalar>(m: &Mat<T>) -> Result<T> {
    if m.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    let (values, tol) = singular_values(m)?;
    let r = values.iter().filter(|&&s| s > tol).count();
    if r == 0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(values[r - 1])
}

/// Smallest of the `min(rows, cols)` singular values (zero allowed).
pub fn sigma_min<T: Scalar>(m: &Mat<T>) -> Result<T> {
    if m.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    Ok(*singular_values(m)?.0.last().expect("nonempty"))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order with matching eigenvector columns.
pub fn symmetric_eigen<T: Scalar>(m: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    if !m.is_square() {
        return Err(Error::Numerical("eigen-decomposition of a non-square matrix".into()));
    }
    if !m.is_finite() {
        return Err(Error::Numerical("eigen-decomposition of a non-finite matrix".into()));
    }
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Mat::identity(n);
    let total = a.frobenius_norm();
    let mut converged = n < 2;
    for _ in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= T::epsilon() * total * T::lit(1e-2) || off == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
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
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi eigenvalue iteration did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (pos, &i) in order.iter().enumerate() {
        vecs.set_col(pos, &v.col(i));
    }
    Ok((values, vecs))
}

/// Lower-triangular `l` with `m = l * l^T`; fails unless `m` is positive definite.
pub fn cholesky<T: Scalar>(m: &Mat<T>) -> Result<Mat<T>> {
    if !m.is_square() {
        return Err(Error::Numerical("Cholesky of a non-square matrix".into()));
    }
    let n = m.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= T::zero() {
            return Err(Error::Numerical("matrix is not positive definite".into()));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse<T: Scalar>(m: &Mat<T>) -> Result<Mat<T>> {
    if !m.is_square() {
        return Err(Error::Numerical("inverse of a non-square matrix".into()));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = Mat::identity(n);
    let scale = m.max_abs();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("nonempty range");
        let p = a[(piv, col)];
        if p.abs() <= scale * T::epsilon() * T::from_usize_lossy(n) || !p.is_finite() {
            return Err(Error::Numerical("matrix is singular".into()));
        }
        for j in 0..n {
            let (x, y) = (a[(col, j)], a[(piv, j)]);
            a[(col, j)] = y;
            a[(piv, j)] = x;
            let (x, y) = (inv[(col, j)], inv[(piv, j)]);
            inv[(col, j)] = y;
            inv[(piv, j)] = x;
        }
        let pinv = T::one() / p;
        for j in 0..n {
            a[(col, j)] = a[(col, j)] * pinv;
            inv[(col, j)] = inv[(col, j)] * pinv;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[(i, col)];
            if f == T::zero() {
                continue;
            }
            for j in 0..n {
                a[(i, j)] = a[(i, j)] - f * a[(col, j)];
                inv[(i, j)] = inv[(i, j)] - f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn svd_diagonal() {
        let s = svd(&m(&[&[3.0, 0.0], &[0.0, 4.0]])).unwrap();
        assert_eq!(s.singular_values, vec![4.0, 3.0]);
        assert!(s.u.approx_eq(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), 1e-15));
        assert!(s.v.approx_eq(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), 1e-15));
    }

    #[test]
    fn svd_rank_one_column() {
        let s = svd(&m(&[&[1.0], &[1.0]])).unwrap();
        let r = 0.5f64.sqrt();
        assert!((s.singular_values[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(s.u.approx_eq(&m(&[&[r, r], &[r, -r]]), 1e-15));
        assert_eq!(s.rank(), 1);
    }

    #[test]
    fn svd_zero_matrix_gives_identity_bases() {
        let s = svd(&Mat::<f64>::zeros(3, 2)).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.u, Mat::identity(3));
        assert_eq!(s.v, Mat::identity(2));
    }

    #[test]
    fn pinv_of_zero_and_empty() {
        assert_eq!(pinv(&Mat::<f64>::zeros(2, 3)).unwrap(), Mat::zeros(3, 2));
        assert_eq!(pinv(&Mat::<f64>::zeros(0, 3)).unwrap().shape(), (3, 0));
    }

    #[test]
    fn sigma_min_of_zero_errors() {
        assert!(matches!(sigma_min_nonzero(&Mat::<f64>::zeros(2, 2)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).is_err());
        let l = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert!((&l * &l.transpose()).approx_eq(&m(&[&[4.0, 2.0], &[2.0, 3.0]]), 1e-14));
    }

    #[test]
    fn inverse_round_trip() {
        let a = m(&[&[0.0, 2.0, 1.0], &[1.0, 0.5, 0.0], &[3.0, 0.0, 1.0]]);
        let i = inverse(&a).unwrap();
        assert!((&a * &i).approx_eq(&Mat::identity(3), 1e-14));
        assert!(inverse(&m(&[&[1.0, 2.0], &[2.0, 4.0]])).is_err());
    }

    #[test]
    fn flush_removes_cancellation_noise() {
        let r = 0.5f64.sqrt();
        let t2 = m(&[&[-r, r]]);
        let c = m(&[&[0.8, 0.1], &[0.8, 0.1]]);
        assert_eq!(t2.matmul_flush(&c), Mat::zeros(1, 2));
    }

    #[test]
    fn f32_svd_works() {
        let a: Mat<f32> = Mat::from_f64_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert!(s.reconstruct().approx_eq(&a, 1e-5));
    }
}
