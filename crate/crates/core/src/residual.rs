//! Residuals and their a-priori bounds under the true-mode hypothesis.
//!
//! For the true mode the residual is linear in the stacked uncertainty
//! `t_k = [e_0; v_0..v_k; w_0..w_{k-1}; df_0..df_{k-1}]`:
//! `r_k = A_k e_0 + sum_{i<k} (F_i df_{k-1-i} + J_i wbar_{k-1-i})`, with
//! `E = -K Phi Psi`, `P_i = -C2 Phi Psi E^{i-1}`, `A_k = P_k`,
//! `F_0 = C2 Phi`, `F_i = P_i K Phi`, `J_0 = Yc`, `J_i = P_i Wc`.
//!
//! Each block of `t_k` lies in a Euclidean ball, hence in a box. Two bounds
//! on `|r_k|` follow: the triangle inequality over blocks (`delta_tri`) and
//! the maximum of `|A t|` over the box vertices (`delta_inf`).

use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::ModeDecomposition;
use crate::error::{Error, Result};
use crate::gains::ObserverGains;
use crate::linalg::{norm, vec_ops, Mat};
use crate::scalar::Scalar;

/// Default cap on the number of enumerated box vertices.
pub const DEFAULT_MAX_VERTICES: u64 = 1 << 20;

/// Free sign bits resolved through a precomputed table of partial sums.
const TABLE_BITS: usize = 10;

/// `z2 - C2 x* - D2 u`.
pub fn compute_residual<T: Scalar>(dec: &ModeDecomposition<T>, x_star: &[T], u_k: &[T], y_k: &[T]) -> Vec<T> {
    let (_, z2) = dec.split_output(y_k);
    vec_ops::sub(&vec_ops::sub(&z2, &dec.c2.mul_vec(x_star)), &dec.d2.mul_vec(u_k))
}

/// Column layout of the residual matrix at horizon `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnLayout {
    pub n: usize,
    pub l: usize,
    pub n_w: usize,
    pub k: usize,
}

impl ColumnLayout {
    pub fn x0(&self) -> usize {
        0
    }

    /// Offset of `v_j`, `0 <= j <= k`.
    pub fn v(&self, j: usize) -> usize {
        self.n + self.l * j
    }

    /// Offset of `w_j`, `0 <= j < k`.
    pub fn w(&self, j: usize) -> usize {
        self.n + self.l * (self.k + 1) + self.n_w * j
    }

    /// Offset of `df_j`, `0 <= j < k`.
    pub fn df(&self, j: usize) -> usize {
        self.n + self.l * (self.k + 1) + self.n_w * self.k + self.n * j
    }

    pub fn dim(&self) -> usize {
        self.n + self.l * (self.k + 1) + (self.n_w + self.n) * self.k
    }

    /// Stacks `t_k` from its parts; slices must have lengths `k + 1` (noise
    /// `v`) and `k` (`w`, `df`).
    pub fn stack<T: Scalar>(&self, e0: &[T], v: &[Vec<T>], w: &[Vec<T>], df: &[Vec<T>]) -> Vec<T> {
        assert_eq!(v.len(), self.k + 1);
        assert_eq!(w.len(), self.k);
        assert_eq!(df.len(), self.k);
        let mut t = Vec::with_capacity(self.dim());
        t.extend_from_slice(e0);
        v.iter().for_each(|x| t.extend_from_slice(x));
        w.iter().for_each(|x| t.extend_from_slice(x));
        df.iter().for_each(|x| t.extend_from_slice(x));
        assert_eq!(t.len(), self.dim());
        t
    }

    /// Per-coordinate box radii for `t_k`. `state_radii[j]` bounds the
    /// state error at step `j` (index 0 is the initial radius).
    pub fn box_radii<T: Scalar>(&self, delta0: T, eta_v: T, eta_w: T, lipschitz: T, state_radii: &[T]) -> Vec<T> {
        let mut r = vec![delta0; self.n];
        r.extend(std::iter::repeat_n(eta_v, self.l * (self.k + 1)));
        r.extend(std::iter::repeat_n(eta_w, self.n_w * self.k));
        for &d in state_radii.iter().take(self.k) {
            r.extend(std::iter::repeat_n(lipschitz * d, self.n));
        }
        assert_eq!(r.len(), self.dim());
        r
    }
}

/// Residual-map blocks for `i = 0..=kmax`.
#[derive(Clone, Debug)]
pub struct ResidualBlocks<T> {
    /// `P_i` for `i >= 1`; index 0 holds an empty placeholder.
    pub p: Vec<Mat<T>>,
    pub f: Vec<Mat<T>>,
    pub j: Vec<Mat<T>>,
    pub n: usize,
    pub l: usize,
    pub n_w: usize,
}

impl<T: Scalar> ResidualBlocks<T> {
    pub fn new(gains: &ObserverGains<T>, dec: &ModeDecomposition<T>, kmax: usize) -> Self {
        let n = gains.k_phi.rows();
        let l = dec.t2.cols();
        let n_w = gains.w_cal.cols() - 2 * l;
        let c2phi = &dec.c2 * &gains.phi;
        let e = -&(&gains.k_phi * &gains.psi);
        let mut p = vec![Mat::zeros(c2phi.rows(), n)];
        let mut f = vec![c2phi.clone()];
        let mut j = vec![gains.y_cal.clone()];
        let mut cur = -&(&c2phi * &gains.psi);
        for i in 1..=kmax {
            if i > 1 {
                cur = &cur * &e;
            }
            f.push(&cur * &gains.k_phi);
            j.push(&cur * &gains.w_cal);
            p.push(cur.clone());
        }
        ResidualBlocks { p, f, j, n, l, n_w }
    }

    pub fn kmax(&self) -> usize {
        self.p.len() - 1
    }

    pub fn layout(&self, k: usize) -> ColumnLayout {
        ColumnLayout { n: self.n, l: self.l, n_w: self.n_w, k }
    }

    /// `A_k`: the residual matrix at horizon `k`, `1 <= k <= kmax`.
    pub fn residual_matrix(&self, k: usize) -> Result<Mat<T>> {
        if k == 0 {
            return Err(Error::ZeroHorizon);
        }
        assert!(k <= self.kmax(), "horizon beyond precomputed blocks");
        let lay = self.layout(k);
        let rows = self.p[k].rows();
        let mut a = Mat::zeros(rows, lay.dim());
        a.set_block(0, lay.x0(), &self.p[k]);
        let inv_sqrt2 = T::one() / T::lit(2.0).sqrt();
        let (l, n_w) = (self.l, self.n_w);
        for i in 0..k {
            let jj = k - 1 - i;
            let ji = &self.j[i];
            add_block(&mut a, lay.v(jj), &ji.cols_range(0, l).scale(inv_sqrt2));
            add_block(&mut a, lay.w(jj), &ji.cols_range(l, l + n_w));
            add_block(&mut a, lay.v(jj + 1), &ji.cols_range(l + n_w, 2 * l + n_w).scale(inv_sqrt2));
            add_block(&mut a, lay.df(jj), &self.f[i]);
        }
        Ok(a)
    }
}

fn add_block<T: Scalar>(a: &mut Mat<T>, c0: usize, b: &Mat<T>) {
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            a[(i, c0 + j)] = a[(i, c0 + j)] + b[(i, j)];
        }
    }
}

/// Result of the vertex bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexBound<T> {
    /// `None` when the vertex count exceeds the cap.
    pub value: Option<T>,
    pub vertices_enumerated: u64,
    pub capped: bool,
}

/// Scaled columns whose norm is below this fraction of the largest are
/// bounded by the triangle inequality instead of enumerated.
const NEGLIGIBLE_COLUMN: f64 = 1e-12;

/// `max |A t|` over the vertices of the box `|t_i| <= radii_i`.
///
/// Coordinates with zero radius or zero column are dropped, the sign of the
/// first remaining one is fixed by the symmetry `t -> -t`, and single-row
/// matrices use the exact value `sum_i |a_i| radii_i`. Columns at rounding
/// level contribute their norm times radius to the bound.
pub fn vertex_bound<T: Scalar>(a: &Mat<T>, radii: &[T], max_vertices: u64) -> VertexBound<T> {
    assert_eq!(a.cols(), radii.len());
    if a.rows() == 1 {
        let v = a.row(0).iter().zip(radii).fold(T::zero(), |s, (&x, &r)| s + x.abs() * r);
        return VertexBound { value: Some(v), vertices_enumerated: 0, capped: false };
    }
    let scaled: Vec<(Vec<T>, T)> = (0..a.cols())
        .filter(|&j| radii[j] != T::zero())
        .map(|j| {
            let c = vec_ops::scale(&a.col(j), radii[j]);
            let nrm = vec_ops::norm2(&c);
            (c, nrm)
        })
        .filter(|(_, nrm)| *nrm != T::zero())
        .collect();
    let largest = scaled.iter().fold(T::zero(), |m, (_, nrm)| m.max(*nrm));
    let cut = largest * T::lit(NEGLIGIBLE_COLUMN);
    let mut slack = T::zero();
    let mut cols = Vec::with_capacity(scaled.len());
    for (c, nrm) in scaled {
        if nrm <= cut {
            slack = slack + nrm;
        } else {
            cols.push(c);
        }
    }
    if cols.is_empty() {
        return VertexBound { value: Some(slack), vertices_enumerated: 0, capped: false };
    }
    let free = cols.len() - 1;
    if free >= 63 || (1u64 << free) > max_vertices {
        return VertexBound { value: None, vertices_enumerated: 0, capped: true };
    }
    VertexBound { value: Some(max_over_signs(&cols) + slack), vertices_enumerated: 1u64 << free, capped: false }
}

/// `max_s |sum_i s_i c_i|` over sign patterns with `s_0 = +1`.
fn max_over_signs<T: Scalar>(cols: &[Vec<T>]) -> T {
    let rows = cols[0].len();
    let free = &cols[1..];
    let lo = free.len().min(TABLE_BITS);
    let (lo_cols, hi_cols) = free.split_at(lo);
    let signed_sum = |base: &[T], part: &[Vec<T>], mask: u64| -> Vec<T> {
        let mut s = base.to_vec();
        for (b, c) in part.iter().enumerate() {
            let plus = mask >> b & 1 == 0;
            for (x, &y) in s.iter_mut().zip(c) {
                *x = if plus { *x + y } else { *x - y };
            }
        }
        s
    };
    let zero = vec![T::zero(); rows];
    let table: Vec<Vec<T>> = (0..1u64 << lo).map(|m| signed_sum(&zero, lo_cols, m)).collect();
    let best_sq = (0..1u64 << hi_cols.len())
        .into_par_iter()
        .map(|hm| {
            let h = signed_sum(&cols[0], hi_cols, hm);
            table.iter().fold(T::zero(), |best, lo_sum| {
                let sq = h.iter().zip(lo_sum).fold(T::zero(), |acc, (&x, &y)| acc + (x + y) * (x + y));
                best.max(sq)
            })
        })
        .reduce(T::zero, T::max);
    best_sq.sqrt()
}

/// Norm of the box-radius vector, `|t|` at any vertex.
pub fn eta_t<T: Scalar>(radii: &[T]) -> T {
    vec_ops::norm2(radii)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdPolicy {
    pub max_vertices: u64,
    pub use_vertex_bound: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { max_vertices: DEFAULT_MAX_VERTICES, use_vertex_bound: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdReport<T> {
    pub k: usize,
    pub delta_tri: T,
    pub delta_inf: Option<T>,
    /// `min(delta_tri, delta_inf)`, or `delta_tri` when the vertex bound is capped.
    pub delta_hat: T,
    pub eta_t: T,
    pub vertices_enumerated: u64,
    pub capped: bool,
}

/// Precomputed thresholds for one mode over `k = 1..=kmax`.
#[derive(Clone, Debug)]
pub struct ThresholdTable<T> {
    pub reports: Vec<ThresholdReport<T>>,
    pub state_radii: Vec<T>,
}

impl<T: Scalar> ThresholdTable<T> {
    pub fn get(&self, k: usize) -> Result<&ThresholdReport<T>> {
        if k == 0 {
            return Err(Error::ZeroHorizon);
        }
        self.reports
            .get(k - 1)
            .ok_or_else(|| Error::Config(format!("threshold requested beyond horizon: k = {k}")))
    }
}

/// `delta_tri_k` for `k = 1..=kmax`, from cached block norms.
pub fn delta_tri_sequence<T: Scalar>(
    blocks: &ResidualBlocks<T>,
    gains: &ObserverGains<T>,
    delta0: T,
    state_radii: &[T],
) -> Vec<T> {
    let kmax = blocks.kmax();
    let (l, n_w) = (blocks.l, blocks.n_w);
    let inv_sqrt2 = T::one() / T::lit(2.0).sqrt();
    let nb = gains.noise;
    let f_norm: Vec<T> = blocks.f.iter().map(norm).collect();
    let j_term: Vec<T> = blocks
        .j
        .iter()
        .map(|j| {
            (norm(&j.cols_range(0, l)) + norm(&j.cols_range(l + n_w, 2 * l + n_w))) * nb.eta_v * inv_sqrt2
                + norm(&j.cols_range(l, l + n_w)) * nb.eta_w
        })
        .collect();
    (1..=kmax)
        .map(|k| {
            let mut s = norm(&blocks.p[k]) * delta0;
            for i in 0..k {
                s = s + gains.lipschitz * f_norm[i] * state_radii[k - 1 - i] + j_term[i];
            }
            s
        })
        .collect()
}

/// Thresholds for `k = 1..=kmax` from the gains of one mode.
pub fn threshold_table<T: Scalar>(
    gains: &ObserverGains<T>,
    dec: &ModeDecomposition<T>,
    delta0: T,
    kmax: usize,
    policy: &ThresholdPolicy,
) -> Result<ThresholdTable<T>> {
    let blocks = ResidualBlocks::new(gains, dec, kmax);
    let state_radii = gains.state_radius_sequence(delta0, kmax);
    let tri = delta_tri_sequence(&blocks, gains, delta0, &state_radii);
    let nb = gains.noise;
    let mut reports = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let lay = blocks.layout(k);
        let radii = lay.box_radii(delta0, nb.eta_v, nb.eta_w, gains.lipschitz, &state_radii);
        let delta_tri = tri[k - 1];
        let vb = if policy.use_vertex_bound {
            vertex_bound(&blocks.residual_matrix(k)?, &radii, policy.max_vertices)
        } else {
            VertexBound { value: None, vertices_enumerated: 0, capped: true }
        };
        let delta_hat = vb.value.map_or(delta_tri, |v| v.min(delta_tri));
        if delta_hat.is_nan() {
            return Err(Error::Numerical(format!("threshold is NaN at k = {k}")));
        }
        reports.push(ThresholdReport {
            k,
            delta_tri,
            delta_inf: vb.value,
            delta_hat,
            eta_t: eta_t(&radii),
            vertices_enumerated: vb.vertices_enumerated,
            capped: vb.capped,
        });
    }
    Ok(ThresholdTable { reports, state_radii })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_dimension() {
        let lay = ColumnLayout { n: 2, l: 3, n_w: 2, k: 4 };
        assert_eq!(lay.dim(), 2 + 3 * 5 + 2 * 4 + 2 * 4);
        assert_eq!(lay.df(3) + 2, lay.dim());
    }

    #[test]
    fn single_row_closed_form() {
        let a = Mat::from_f64_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let vb = vertex_bound(&a, &[1.0, 0.5, 2.0], 1 << 20);
        assert_eq!(vb.value, Some(3.0));
    }

    #[test]
    fn identity_box_corner() {
        let a = Mat::<f64>::identity(3);
        let vb = vertex_bound(&a, &[1.0, 1.0, 1.0], 1 << 20);
        assert!((vb.value.unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(vb.vertices_enumerated, 4);
    }

    #[test]
    fn cap_reports_none() {
        let a = Mat::<f64>::from_fn(2, 30, |i, j| (i + j) as f64 + 1.0);
        let vb = vertex_bound(&a, &[1.0; 30], 1 << 10);
        assert!(vb.capped && vb.value.is_none());
    }
}
