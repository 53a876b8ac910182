//! Output and input splitting driven by the SVD of the feedthrough matrix `H`.
//!
//! With `H = [U1 U2] [S 0; 0 0] [V1 V2]^T`, the output splits into
//! `z1 = U1^T y`, which sees the unknown input directly, and `z2 = U2^T y`,
//! which does not. The unknown input splits as `d = V1 d1 + V2 d2`.

use crate::error::Result;
use crate::linalg::{svd, Mat};
use crate::scalar::Scalar;
use crate::system::ModeModel;

#[derive(Clone, Debug)]
pub struct ModeDecomposition<T> {
    /// Numerical rank of `H`.
    pub rank_h: usize,
    /// Nonzero singular values of `H`, descending.
    pub sigma: Vec<T>,
    pub u1: Mat<T>,
    pub u2: Mat<T>,
    pub v1: Mat<T>,
    pub v2: Mat<T>,
    /// `U1^T`
    pub t1: Mat<T>,
    /// `U2^T`
    pub t2: Mat<T>,
    pub c1: Mat<T>,
    pub c2: Mat<T>,
    pub d1: Mat<T>,
    pub d2: Mat<T>,
    pub g1: Mat<T>,
    pub g2: Mat<T>,
}

/// Decomposes one mode. Entries of the derived products that are
/// indistinguishable from rounding noise are stored as exact zeros.
pub fn decompose<T: Scalar>(mode: &ModeModel<T>) -> Result<ModeDecomposition<T>> {
    let (l, p) = mode.h.shape();
    let (u, v, sigma) = if mode.h.is_empty() {
        (Mat::identity(l), Mat::identity(p), Vec::new())
    } else {
        let s = svd(&mode.h)?;
        let r = s.rank();
        if r == 0 {
            (Mat::identity(l), Mat::identity(p), Vec::new())
        } else {
            (s.u, s.v, s.singular_values[..r].to_vec())
        }
    };
    let r = sigma.len();
    let u1 = u.cols_range(0, r);
    let u2 = u.cols_range(r, l);
    let v1 = v.cols_range(0, r);
    let v2 = v.cols_range(r, p);
    let t1 = u1.transpose();
    let t2 = u2.transpose();
    Ok(ModeDecomposition {
        rank_h: r,
        c1: t1.matmul_flush(&mode.c),
        c2: t2.matmul_flush(&mode.c),
        d1: t1.matmul_flush(&mode.d),
        d2: t2.matmul_flush(&mode.d),
        g1: mode.g.matmul_flush(&v1),
        g2: mode.g.matmul_flush(&v2),
        sigma,
        u1,
        u2,
        v1,
        v2,
        t1,
        t2,
    })
}

impl<T: Scalar> ModeDecomposition<T> {
    /// `(z1, z2) = (T1 y, T2 y)`.
    pub fn split_output(&self, y: &[T]) -> (Vec<T>, Vec<T>) {
        (self.t1.mul_vec(y), self.t2.mul_vec(y))
    }

    /// Recombines `d = V1 d1 + V2 d2`.
    pub fn join_input(&self, d1: &[T], d2: &[T]) -> Vec<T> {
        let a = self.v1.mul_vec(d1);
        let b = self.v2.mul_vec(d2);
        a.iter().zip(&b).map(|(&x, &y)| x + y).collect()
    }

    /// `M1 = S^{-1}`.
    pub fn m1(&self) -> Mat<T> {
        Mat::diag(&self.sigma.iter().map(|&s| T::one() / s).collect::<Vec<_>>())
    }

    /// `diag(S)` as a square matrix.
    pub fn sigma_matrix(&self) -> Mat<T> {
        Mat::diag(&self.sigma)
    }

    /// `U1 S V1^T`, which reproduces `H` up to rounding.
    pub fn h_reconstructed(&self) -> Mat<T> {
        &(&self.u1 * &self.sigma_matrix()) * &self.v1.transpose()
    }

    /// Number of rows of `z2`.
    pub fn z2_dim(&self) -> usize {
        self.t2.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::FieldDescriptor;

    fn mode_with_h(h: Mat<f64>, c: Mat<f64>) -> ModeModel<f64> {
        let (l, p) = h.shape();
        let n = c.cols();
        ModeModel::new(
            FieldDescriptor::Linear { a: Mat::identity(n) },
            Mat::zeros(n, 0),
            Mat::from_fn(n, p, |i, j| (i + 2 * j) as f64 * 0.1 + 0.3),
            c,
            Mat::zeros(l, 0),
            h,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_h_gives_identity_t2() {
        let m = mode_with_h(Mat::zeros(3, 2), Mat::identity(3));
        let d = decompose(&m).unwrap();
        assert_eq!(d.rank_h, 0);
        assert_eq!(d.t2, Mat::identity(3));
        assert_eq!(d.t1.shape(), (0, 3));
        assert_eq!(d.g2, m.g);
        assert_eq!(d.g1.shape(), (3, 0));
    }

    #[test]
    fn full_rank_square_h_leaves_empty_t2() {
        let h = Mat::from_f64_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let d = decompose(&mode_with_h(h, Mat::identity(2))).unwrap();
        assert_eq!(d.rank_h, 2);
        assert_eq!(d.t2.shape(), (0, 2));
        assert_eq!(d.c2.shape(), (0, 2));
        assert_eq!(d.g2.shape(), (2, 0));
    }

    #[test]
    fn identical_output_rows_give_exact_zero_c2() {
        let h = Mat::from_f64_rows(&[vec![0.5], vec![0.5]]).unwrap();
        let c = Mat::from_f64_rows(&[vec![0.8, 0.1], vec![0.8, 0.1]]).unwrap();
        let d = decompose(&mode_with_h(h, c)).unwrap();
        assert_eq!(d.c2, Mat::zeros(1, 2));
    }
}
