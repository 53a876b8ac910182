//! One-sided Jacobi singular value decomposition.

use crate::error::{Error, Result};
use crate::linalg::mat::{vec_ops, Mat};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 60;
const SIGN_TIE: f64 = 1e-9;

/// Full decomposition `m = u * diag(singular_values) * v^T` with `u` of size
/// `rows x rows`, `v` of size `cols x cols` and singular values sorted in
/// descending order (`min(rows, cols)` of them).
///
/// Each column of `u` paired with a singular value has its first entry of
/// maximal magnitude made positive, with the paired `v` column flipped along.
/// Columns beyond the numerical rank come from a deterministic completion of
/// the standard basis and follow the same sign rule independently.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Mat<T>,
    pub singular_values: Vec<T>,
    pub v: Mat<T>,
    tolerance: T,
}

impl<T: Scalar> Svd<T> {
    /// Numerical rank: singular values above `max(rows, cols) * sigma_1 * RANK_FACTOR`.
    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|&&s| s > self.tolerance).count()
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    pub fn reconstruct(&self) -> Mat<T> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut s = Mat::zeros(m, n);
        for (i, &x) in self.singular_values.iter().enumerate() {
            s[(i, i)] = x;
        }
        &(&self.u * &s) * &self.v.transpose()
    }
}

pub fn svd<T: Scalar>(a: &Mat<T>) -> Result<Svd<T>> {
    if !a.is_finite() {
        return Err(Error::Numerical("svd of a matrix with non-finite entries".into()));
    }
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose())?;
        let mut out = Svd { u: t.v, singular_values: t.singular_values, v: t.u, tolerance: t.tolerance };
        let k = out.singular_values.len();
        fix_signs(&mut out.u, &mut out.v, k);
        return Ok(out);
    }

    let (w, v) = jacobi_tall(a, true)?;
    let mut order: Vec<(usize, T)> = (0..n).map(|j| (j, vec_ops::norm2(&w.col(j)))).collect();
    order.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));

    let sigma1 = order.first().map_or(T::zero(), |o| o.1);
    let tolerance = T::from_usize_lossy(m.max(n)) * sigma1 * T::lit(T::RANK_FACTOR);
    let singular_values: Vec<T> = order.iter().map(|o| o.1).collect();
    let rank = singular_values.iter().filter(|&&s| s > tolerance).count();

    let mut vs = Mat::zeros(n, n);
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(m);
    for (pos, &(j, s)) in order.iter().enumerate() {
        vs.set_col(pos, &v.col(j));
        if pos < rank {
            let mut c = vec_ops::scale(&w.col(j), T::one() / s);
            reorthogonalize(&mut c, &u_cols);
            u_cols.push(c);
        }
    }
    complete_basis(&mut u_cols, m);
    let mut u = Mat::zeros(m, m);
    for (j, c) in u_cols.iter().enumerate() {
        u.set_col(j, c);
    }
    fix_signs(&mut u, &mut vs, rank);
    Ok(Svd { u, singular_values, v: vs, tolerance })
}

/// Singular values in descending order together with the rank tolerance
/// used by [`svd`], without forming either factor.
pub fn singular_values<T: Scalar>(a: &Mat<T>) -> Result<(Vec<T>, T)> {
    if !a.is_finite() {
        return Err(Error::Numerical("svd of a matrix with non-finite entries".into()));
    }
    let tall = if a.rows() < a.cols() { a.transpose() } else { a.clone() };
    let (w, _) = jacobi_tall(&tall, false)?;
    let mut values: Vec<T> = (0..w.cols()).map(|j| vec_ops::norm2(&w.col(j))).collect();
    values.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let sigma1 = values.first().copied().unwrap_or_else(T::zero);
    let tolerance = T::from_usize_lossy(a.rows().max(a.cols())) * sigma1 * T::lit(T::RANK_FACTOR);
    Ok((values, tolerance))
}

fn jacobi_tall<T: Scalar>(a: &Mat<T>, track_v: bool) -> Result<(Mat<T>, Mat<T>)> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = if track_v { Mat::identity(n) } else { Mat::zeros(0, 0) };
    // Inner products of length m carry about m * eps relative rounding.
    let eps = T::epsilon() * T::from_usize_lossy(m.max(1));
    let fro2 = a.as_slice().iter().fold(T::zero(), |acc, &x| acc + x * x);
    // Columns below this squared norm are rounding noise and stay unrotated.
    let floor = T::epsilon() * T::epsilon() * fro2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha = alpha + wp * wp;
                    beta = beta + wq * wq;
                    gamma = gamma + wp * wq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() || alpha.min(beta) <= floor {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                if track_v {
                    rotate_cols(&mut v, p, q, c, s);
                }
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::Numerical(format!("Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")))
}

fn rotate_cols<T: Scalar>(m: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    for i in 0..m.rows() {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * xp - s * xq;
        m[(i, q)] = s * xp + c * xq;
    }
}

fn reorthogonalize<T: Scalar>(c: &mut Vec<T>, basis: &[Vec<T>]) {
    for b in basis {
        let d = vec_ops::dot(c, b);
        for (x, &y) in c.iter_mut().zip(b) {
            *x = *x - d * y;
        }
    }
    let nrm = vec_ops::norm2(c);
    if nrm > T::zero() {
        for x in c.iter_mut() {
            *x = *x / nrm;
        }
    }
}

/// Extends an orthonormal family to a basis of `R^dim`. Each step picks the
/// standard basis vector with the largest residual after two Gram-Schmidt
/// passes, lowest index first on ties.
pub(crate) fn complete_basis<T: Scalar>(basis: &mut Vec<Vec<T>>, dim: usize) {
    while basis.len() < dim {
        let mut best: Option<(T, Vec<T>)> = None;
        for e in 0..dim {
            let mut c = vec![T::zero(); dim];
            c[e] = T::one();
            for _ in 0..2 {
                for b in basis.iter() {
                    let d = vec_ops::dot(&c, b);
                    for (x, &y) in c.iter_mut().zip(b) {
                        *x = *x - d * y;
                    }
                }
            }
            let r = vec_ops::norm2(&c);
            if best.as_ref().is_none_or(|(br, _)| r > *br) {
                best = Some((r, c));
            }
        }
        let (r, mut c) = best.expect("dim > 0 when completing");
        for x in c.iter_mut() {
            *x = *x / r;
        }
        basis.push(c);
    }
}

/// Makes the first entry of (near) maximal magnitude of each column positive.
fn fix_signs<T: Scalar>(u: &mut Mat<T>, v: &mut Mat<T>, paired: usize) {
    let flip_needed = |m: &Mat<T>, j: usize| -> bool {
        let col = m.col(j);
        let max = col.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        let tie = T::lit(SIGN_TIE);
        col.iter().find(|x| x.abs() >= max - tie).is_some_and(|&x| x < T::zero())
    };
    let flip = |m: &mut Mat<T>, j: usize| {
        for i in 0..m.rows() {
            m[(i, j)] = -m[(i, j)];
        }
    };
    for j in 0..u.cols() {
        if flip_needed(u, j) {
            flip(u, j);
            if j < paired {
                flip(v, j);
            }
        }
    }
    for j in paired..v.cols() {
        if flip_needed(v, j) {
            flip(v, j);
        }
    }
}
