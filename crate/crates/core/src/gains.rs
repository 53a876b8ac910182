//! Observer gains, radius-recursion constants and certification.
//!
//! For mode `q` with decomposition blocks `C1, C2, G1, G2, T1, T2`:
//! `M1 = S^{-1}`, `M2 = (C2 G2)^+`, `Phi = I - G2 M2 C2`, `Psi = G1 M1 C1`.
//! The state error obeys
//! `e_k = K Phi (df - Psi e_{k-1}) + Wc wbar_{k-1}` with `K = I - L C2` and
//! `wbar_j = [v_j / sqrt2; w_j; v_{j+1} / sqrt2]`.
//!
//! Radii are propagated in the metric `|S x|` for an invertible `S`
//! (identity unless tuned or supplied):
//! `rho_k = theta rho_{k-1} + eta_bar`, `delta_k = |S^{-1}| rho_k`, where
//! `theta` bounds `|S K Phi (J - Psi) S^{-1}|` over every slope matrix `J`
//! of the field.

use serde::Serialize;

use crate::decomposition::ModeDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, inverse, norm, pinv, rank, symmetric_eigen, Mat};
use crate::scalar::Scalar;
use crate::system::{ModeModel, NoiseBounds};

#[derive(Clone, Debug)]
pub struct ObserverGains<T> {
    /// Output-error gain `L`, `n x (l - p_H)`.
    pub l_tilde: Mat<T>,
    pub m1: Mat<T>,
    pub m2: Mat<T>,
    pub phi: Mat<T>,
    pub psi: Mat<T>,
    /// `K Phi = (I - L C2) Phi`.
    pub k_phi: Mat<T>,
    /// Noise map `Wc`, `n x (2 l + n_w)`.
    pub w_cal: Mat<T>,
    /// Residual noise map `Yc`, `(l - p_H) x (2 l + n_w)`.
    pub y_cal: Mat<T>,
    /// Metric factor `S`.
    pub metric: Mat<T>,
    pub metric_inv: Mat<T>,
    /// Contraction factor of the radius recursion.
    pub theta: T,
    /// Per-step noise contribution to the metric radius.
    pub eta_bar: T,
    /// `|K Phi|`.
    pub theta_phi: T,
    /// `(L_f + |Psi|) |K Phi|`.
    pub theta_2: T,
    /// `|Re| eta_v + |Psi Phi W| eta_w` with `Re = -(Psi Phi G1 M1 T1 + Psi G2 M2 T2 + L T2)`.
    pub eta_bar_coarse: T,
    pub beta: T,
    pub alpha_bar: T,
    pub lipschitz: T,
    pub noise: NoiseBounds<T>,
    pub rank_condition: bool,
}

/// Numbers describing a gain choice, for reports.
#[derive(Clone, Debug, Serialize)]
pub struct GainSummary {
    pub theta: f64,
    pub eta_bar: f64,
    pub theta_phi: f64,
    pub theta_2: f64,
    pub eta_bar_coarse: f64,
    pub beta: f64,
    pub alpha_bar: f64,
    pub metric_norm: f64,
    pub metric_inv_norm: f64,
    pub certified: bool,
    pub steady_state_radius: Option<f64>,
    pub l_tilde: Vec<Vec<f64>>,
}

/// `rank(C2 G2) = p - p_H`.
pub fn rank_condition<T: Scalar>(dec: &ModeDecomposition<T>) -> Result<bool> {
    let c2g2 = &dec.c2 * &dec.g2;
    Ok(rank(&c2g2)? == dec.g2.cols())
}

struct Fixed<T> {
    m1: Mat<T>,
    m2: Mat<T>,
    phi: Mat<T>,
    psi: Mat<T>,
}

fn fixed_blocks<T: Scalar>(dec: &ModeDecomposition<T>) -> Result<Fixed<T>> {
    let n = dec.c2.cols();
    let m1 = dec.m1();
    let m2 = pinv(&(&dec.c2 * &dec.g2))?;
    let phi = &Mat::identity(n) - &(&(&dec.g2 * &m2) * &dec.c2);
    let psi = &(&dec.g1 * &m1) * &dec.c1;
    Ok(Fixed { m1, m2, phi, psi })
}

/// `L = Phi (C2 Phi)^+`.
pub fn heuristic_gain<T: Scalar>(dec: &ModeDecomposition<T>) -> Result<Mat<T>> {
    let f = fixed_blocks(dec)?;
    Ok(&f.phi * &pinv(&(&dec.c2 * &f.phi))?)
}

/// Builds the gains for mode `q`. Without a user gain the pseudoinverse
/// heuristic is used; the metric is the identity.
pub fn synthesize_gains<T: Scalar>(
    q: usize,
    mode: &ModeModel<T>,
    dec: &ModeDecomposition<T>,
    noise: NoiseBounds<T>,
    l_tilde: Option<&Mat<T>>,
) -> Result<ObserverGains<T>> {
    synthesize_gains_with_metric(q, mode, dec, noise, l_tilde, None)
}

/// As [`synthesize_gains`], with an optional metric factor `S`.
pub fn synthesize_gains_with_metric<T: Scalar>(
    q: usize,
    mode: &ModeModel<T>,
    dec: &ModeDecomposition<T>,
    noise: NoiseBounds<T>,
    l_tilde: Option<&Mat<T>>,
    metric: Option<&Mat<T>>,
) -> Result<ObserverGains<T>> {
    if !rank_condition(dec)? {
        return Err(Error::Synthesis {
            mode: q,
            reason: format!("rank(C2 G2) differs from p - p_H = {}", dec.g2.cols()),
        });
    }
    let n = mode.dims().n;
    let r = dec.z2_dim();
    let l_tilde = match l_tilde {
        Some(l) if l.shape() != (n, r) => {
            return Err(Error::Synthesis {
                mode: q,
                reason: format!("gain is {}x{}, expected {n}x{r}", l.rows(), l.cols()),
            })
        }
        Some(l) => l.clone(),
        None => heuristic_gain(dec)?,
    };
    let metric = metric.cloned().unwrap_or_else(|| Mat::identity(n));
    if metric.shape() != (n, n) {
        return Err(Error::Synthesis { mode: q, reason: "metric factor must be n x n".into() });
    }
    let metric_inv = inverse(&metric)
        .map_err(|_| Error::Synthesis { mode: q, reason: "metric factor is singular".into() })?;
    Ok(assemble(mode, dec, noise, l_tilde, metric, metric_inv, fixed_blocks(dec)?))
}

/// Metric factor `S` with `S^T S = P` for a positive definite `P`.
pub fn metric_factor_from_p<T: Scalar>(p: &Mat<T>) -> Result<Mat<T>> {
    if !p.is_symmetric(T::lit(1e-9) * (T::one() + p.max_abs())) {
        return Err(Error::Config("metric matrix must be symmetric".into()));
    }
    Ok(cholesky(&p.symmetrize())
        .map_err(|_| Error::Config("metric matrix must be positive definite".into()))?
        .transpose())
}

fn assemble<T: Scalar>(
    mode: &ModeModel<T>,
    dec: &ModeDecomposition<T>,
    noise: NoiseBounds<T>,
    l_tilde: Mat<T>,
    metric: Mat<T>,
    metric_inv: Mat<T>,
    f: Fixed<T>,
) -> ObserverGains<T> {
    let n = mode.dims().n;
    let r = dec.z2_dim();
    let sqrt2 = T::lit(2.0).sqrt();
    let k = &Mat::identity(n) - &(&l_tilde * &dec.c2);
    let k_phi = &k * &f.phi;
    let g1m1t1 = &(&dec.g1 * &f.m1) * &dec.t1;
    let g2m2t2 = &(&dec.g2 * &f.m2) * &dec.t2;

    let w1 = &k_phi * &g1m1t1;
    let w2 = &k_phi * &mode.w;
    let w3 = &(&k * &g2m2t2) + &(&l_tilde * &dec.t2);
    let w_cal = Mat::hstack(&[&w1.scale(-sqrt2), &w2, &w3.scale(-sqrt2)]);

    let c2phi = &dec.c2 * &f.phi;
    let y1 = &c2phi * &g1m1t1;
    let y2 = &c2phi * &mode.w;
    let y3 = &(&Mat::identity(r) - &(&(&dec.c2 * &dec.g2) * &f.m2)) * &dec.t2;
    let y_cal = Mat::hstack(&[&y1.scale(-sqrt2), &y2, &y3.scale(sqrt2)]);

    let theta = mode
        .field
        .slope_vertices()
        .iter()
        .map(|j| norm(&(&(&metric * &(&k_phi * &(j - &f.psi))) * &metric_inv)))
        .fold(T::zero(), |a, b| if b.is_nan() { T::nan() } else { a.max(b) });
    let eta_bar = norm(&(&metric * &w1)) * noise.eta_v
        + norm(&(&metric * &w2)) * noise.eta_w
        + norm(&(&metric * &w3)) * noise.eta_v;

    let theta_phi = norm(&k_phi);
    let theta_2 = (mode.lipschitz + norm(&f.psi)) * theta_phi;
    let re = &(&(&(&f.psi * &f.phi) * &g1m1t1) + &(&f.psi * &g2m2t2)) + &(&l_tilde * &dec.t2);
    let eta_bar_coarse =
        norm(&re) * noise.eta_v + norm(&(&(&f.psi * &f.phi) * &mode.w)) * noise.eta_w;

    let v2m2 = &dec.v2 * &f.m2;
    let v2m2c2 = &v2m2 * &dec.c2;
    let v1m1 = &dec.v1 * &f.m1;
    let beta = norm(&(&(&v1m1 * &dec.c1) - &(&v2m2c2 * &f.psi))) + mode.lipschitz * norm(&v2m2c2);
    let d1_noise = &(&(&(&v2m2c2 * &dec.g1) * &f.m1) * &dec.t1) - &(&v1m1 * &dec.t1);
    let alpha_bar = norm(&(&v2m2c2 * &mode.w)) * noise.eta_w
        + (norm(&d1_noise) + norm(&(&v2m2 * &dec.t2))) * noise.eta_v;

    ObserverGains {
        rank_condition: true,
        l_tilde,
        m1: f.m1,
        m2: f.m2,
        phi: f.phi,
        psi: f.psi,
        k_phi,
        w_cal,
        y_cal,
        metric,
        metric_inv,
        theta,
        eta_bar,
        theta_phi,
        theta_2,
        eta_bar_coarse,
        beta,
        alpha_bar,
        lipschitz: mode.lipschitz,
        noise,
    }
}

impl<T: Scalar> ObserverGains<T> {
    pub fn certified(&self) -> bool {
        self.theta < T::one()
    }

    pub fn metric_norm(&self) -> T {
        norm(&self.metric)
    }

    pub fn metric_inv_norm(&self) -> T {
        norm(&self.metric_inv)
    }

    /// Metric radius after one step.
    pub fn next_metric_radius(&self, rho: T) -> T {
        self.theta * rho + self.eta_bar
    }

    /// Euclidean state radius from a metric radius.
    pub fn euclidean_radius(&self, rho: T) -> T {
        self.metric_inv_norm() * rho
    }

    /// Input radius `beta delta_{k-1} + alpha_bar` from the previous state radius.
    pub fn input_radius(&self, prev_state_radius: T) -> T {
        self.beta * prev_state_radius + self.alpha_bar
    }

    /// State radii `delta_0 .. delta_kmax`, with `delta_0` the initial radius.
    pub fn state_radius_sequence(&self, delta0: T, kmax: usize) -> Vec<T> {
        let sinv = self.metric_inv_norm();
        let mut rho = self.metric_norm() * delta0;
        let mut out = Vec::with_capacity(kmax + 1);
        out.push(delta0);
        for _ in 0..kmax {
            rho = self.next_metric_radius(rho);
            out.push(sinv * rho);
        }
        out
    }

    /// Limit of the state radius, when the recursion contracts.
    pub fn steady_state_radius(&self) -> Option<T> {
        self.certified().then(|| self.metric_inv_norm() * self.eta_bar / (T::one() - self.theta))
    }

    pub fn summary(&self) -> GainSummary {
        GainSummary {
            theta: self.theta.as_f64(),
            eta_bar: self.eta_bar.as_f64(),
            theta_phi: self.theta_phi.as_f64(),
            theta_2: self.theta_2.as_f64(),
            eta_bar_coarse: self.eta_bar_coarse.as_f64(),
            beta: self.beta.as_f64(),
            alpha_bar: self.alpha_bar.as_f64(),
            metric_norm: self.metric_norm().as_f64(),
            metric_inv_norm: self.metric_inv_norm().as_f64(),
            certified: self.certified(),
            steady_state_radius: self.steady_state_radius().map(|x| x.as_f64()),
            l_tilde: self.l_tilde.cast::<f64>().to_rows(),
        }
    }
}

/// Which steady-state bound the certificate check selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertificateCase {
    /// Only the quadratic-stability bound applies.
    Lyapunov,
    /// Only the contraction bound applies.
    Contraction,
    /// Both apply; the smaller is used.
    Both,
    /// Neither applies.
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub theta_1: f64,
    pub theta_2: f64,
    pub delta_inf_1: Option<f64>,
    pub delta_inf_2: Option<f64>,
    pub case: CertificateCase,
    pub delta_x_inf: Option<f64>,
    pub delta_d_inf: Option<f64>,
}

/// Checks an externally computed certificate `(P, rho)` for a gain choice and
/// derives steady-state radii.
pub fn verify_certificate<T: Scalar>(gains: &ObserverGains<T>, p: &Mat<T>, rho: T) -> Result<CertificateReport> {
    let n = gains.l_tilde.rows();
    if p.shape() != (n, n) {
        return Err(Error::InvalidCertificate(format!("P must be {n}x{n}")));
    }
    if !p.is_symmetric(T::lit(1e-9) * (T::one() + p.max_abs())) {
        return Err(Error::InvalidCertificate("P is not symmetric".into()));
    }
    if !(rho >= T::zero()) {
        return Err(Error::InvalidCertificate("rho must be nonnegative".into()));
    }
    let (eig, _) = symmetric_eigen(p)?;
    let (lmin, lmax) = (eig[0], eig[n - 1]);
    if !(lmin > T::zero()) {
        return Err(Error::InvalidCertificate(format!("P is not positive definite (lambda_min = {lmin})")));
    }
    let theta_1 = (lmax - T::one()).abs() / lmin;
    let theta_2 = gains.theta_2;
    let nb = gains.noise;
    let d1 = (theta_1 < T::one()).then(|| {
        rho * ((nb.eta_w * nb.eta_w + nb.eta_v * nb.eta_v) / (lmin * (T::one() - theta_1))).sqrt()
    });
    let d2 = (theta_2 < T::one()).then(|| gains.eta_bar_coarse / (T::one() - theta_2));
    let (case, dx) = match (d1, d2) {
        (Some(a), Some(b)) => (CertificateCase::Both, Some(a.min(b))),
        (Some(a), None) => (CertificateCase::Lyapunov, Some(a)),
        (None, Some(b)) => (CertificateCase::Contraction, Some(b)),
        (None, None) => (CertificateCase::None, None),
    };
    Ok(CertificateReport {
        lambda_min: lmin.as_f64(),
        lambda_max: lmax.as_f64(),
        theta_1: theta_1.as_f64(),
        theta_2: theta_2.as_f64(),
        delta_inf_1: d1.map(|x| x.as_f64()),
        delta_inf_2: d2.map(|x| x.as_f64()),
        case,
        delta_x_inf: dx.map(|x| x.as_f64()),
        delta_d_inf: dx.map(|x| gains.input_radius(x).as_f64()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::decompose;
    use crate::system::FieldDescriptor;

    fn full_output_mode() -> ModeModel<f64> {
        let c = Mat::from_f64_rows(&[vec![1.0, 0.0], vec![0.4, 1.2], vec![-0.5, 0.8]]).unwrap();
        let h = Mat::from_f64_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        ModeModel::new(
            FieldDescriptor::Linear { a: Mat::from_f64_rows(&[vec![0.5, 0.1], vec![0.0, 0.4]]).unwrap() },
            Mat::zeros(2, 0),
            Mat::from_f64_rows(&[vec![0.6], vec![-0.3]]).unwrap(),
            c,
            Mat::zeros(3, 0),
            h,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn invertible_c2_gives_zero_contraction() {
        let m = full_output_mode();
        let d = decompose(&m).unwrap();
        let g = synthesize_gains(0, &m, &d, NoiseBounds { eta_w: 0.1, eta_v: 0.1 }, None).unwrap();
        assert!(g.theta < 1e-12);
        assert!(g.theta_2 < 1e-12);
        assert!(g.certified());
    }

    #[test]
    fn identity_certificate_uses_lyapunov_bound() {
        let m = full_output_mode();
        let d = decompose(&m).unwrap();
        let g = synthesize_gains(0, &m, &d, NoiseBounds { eta_w: 0.3, eta_v: 0.4 }, None).unwrap();
        let rep = verify_certificate(&g, &Mat::identity(2), 2.0).unwrap();
        assert!((rep.delta_inf_1.unwrap() - 2.0 * 0.5).abs() < 1e-12);
        assert!((rep.delta_inf_2.unwrap() - g.eta_bar_coarse).abs() < 1e-9);
        assert_eq!(rep.case, CertificateCase::Both);
    }

    #[test]
    fn indefinite_certificate_rejected() {
        let m = full_output_mode();
        let d = decompose(&m).unwrap();
        let g = synthesize_gains(0, &m, &d, NoiseBounds { eta_w: 0.1, eta_v: 0.1 }, None).unwrap();
        let p = Mat::from_f64_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(verify_certificate(&g, &p, 1.0), Err(Error::InvalidCertificate(_))));
    }

    #[test]
    fn wrong_gain_shape_rejected() {
        let m = full_output_mode();
        let d = decompose(&m).unwrap();
        let bad = Mat::zeros(2, 3);
        let r = synthesize_gains(0, &m, &d, NoiseBounds { eta_w: 0.1, eta_v: 0.1 }, Some(&bad));
        assert!(matches!(r, Err(Error::Synthesis { .. })));
    }
}
