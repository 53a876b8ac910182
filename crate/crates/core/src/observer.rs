//! Mode-matched observer: one recursive state and unknown-input estimator per
//! mode, with guaranteed error radii.
//!
//! One step, from `x_{k-1|k-1}` and the stored `d1_{k-1}`:
//! 1. `xp = f(x_{k-1|k-1}) + B u_{k-1} + G1 d1_{k-1}`
//! 2. `d2_{k-1} = M2 (z2_k - C2 xp - D2 u_k)`
//! 3. `x* = xp + G2 d2_{k-1}`
//! 4. `x_{k|k} = x* + L (z2_k - C2 x* - D2 u_k)`
//! 5. `d1_k = M1 (z1_k - C1 x_{k|k} - D1 u_k)`
//! 6. `d_{k-1} = V1 d1_{k-1} + V2 d2_{k-1}`

use crate::decomposition::ModeDecomposition;
use crate::error::{Error, Result};
use crate::gains::ObserverGains;
use crate::linalg::vec_ops;
use crate::scalar::Scalar;
use crate::system::{ModeModel, SwitchedSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState<T> {
    pub k: usize,
    /// `x_{k|k}`
    pub x_hat: Vec<T>,
    /// `x*_{k|k}`, the estimate before the output-error correction.
    pub x_star: Vec<T>,
    /// `d1_k`, consumed by the next time update.
    pub d1_hat: Vec<T>,
    /// `d_{k-1}`; absent at `k = 0`.
    pub d_hat_prev: Option<Vec<T>>,
    /// Metric radius `rho_k`.
    pub rho: T,
    /// Euclidean state radius `delta_k`.
    pub delta_x: T,
    /// Input radius for `d_{k-1}`; absent at `k = 0`.
    pub delta_d_prev: Option<T>,
}

/// Starts the observer of mode `q` from the initial ball and the first
/// measurement `(u_0, y_0)`.
pub fn init<T: Scalar>(
    system: &SwitchedSystem<T>,
    q: usize,
    dec: &ModeDecomposition<T>,
    gains: &ObserverGains<T>,
    u0: &[T],
    y0: &[T],
    allow_uncertified: bool,
) -> Result<ObserverState<T>> {
    system.check_mode(q)?;
    if !gains.certified() && !allow_uncertified {
        return Err(Error::Uncertified { mode: q, theta: gains.theta.as_f64() });
    }
    let mode = &system.modes[q];
    check_io(mode, u0, y0)?;
    let x_hat = system.x_hat0.clone();
    let d1_hat = first_input_estimate(dec, gains, &x_hat, u0, y0);
    Ok(ObserverState {
        k: 0,
        x_star: x_hat.clone(),
        x_hat,
        d1_hat,
        d_hat_prev: None,
        rho: gains.metric_norm() * system.delta_x0,
        delta_x: system.delta_x0,
        delta_d_prev: None,
    })
}

fn first_input_estimate<T: Scalar>(
    dec: &ModeDecomposition<T>,
    gains: &ObserverGains<T>,
    x: &[T],
    u: &[T],
    y: &[T],
) -> Vec<T> {
    let (z1, _) = dec.split_output(y);
    let innov = vec_ops::sub(&vec_ops::sub(&z1, &dec.c1.mul_vec(x)), &dec.d1.mul_vec(u));
    gains.m1.mul_vec(&innov)
}

fn check_io<T: Scalar>(mode: &ModeModel<T>, u: &[T], y: &[T]) -> Result<()> {
    let dims = mode.dims();
    if u.len() != dims.m || y.len() != dims.l {
        return Err(Error::Config(format!(
            "input/output lengths ({}, {}) do not match (m, l) = ({}, {})",
            u.len(),
            y.len(),
            dims.m,
            dims.l
        )));
    }
    Ok(())
}

/// Advances the observer from `k - 1` to `k`.
pub fn step<T: Scalar>(
    state: &ObserverState<T>,
    mode: &ModeModel<T>,
    dec: &ModeDecomposition<T>,
    gains: &ObserverGains<T>,
    u_prev: &[T],
    u_k: &[T],
    y_k: &[T],
) -> Result<ObserverState<T>> {
    check_io(mode, u_k, y_k)?;
    let (z1, z2) = dec.split_output(y_k);
    let x_pred = vec_ops::sum(&[
        &mode.field.eval(&state.x_hat),
        &mode.b.mul_vec(u_prev),
        &dec.g1.mul_vec(&state.d1_hat),
    ]);
    let d2u = dec.d2.mul_vec(u_k);
    let innov_pred = vec_ops::sub(&vec_ops::sub(&z2, &dec.c2.mul_vec(&x_pred)), &d2u);
    let d2_hat = gains.m2.mul_vec(&innov_pred);
    let x_star = vec_ops::add(&x_pred, &dec.g2.mul_vec(&d2_hat));
    let innov = vec_ops::sub(&vec_ops::sub(&z2, &dec.c2.mul_vec(&x_star)), &d2u);
    let x_hat = vec_ops::add(&x_star, &gains.l_tilde.mul_vec(&innov));
    let innov1 = vec_ops::sub(&vec_ops::sub(&z1, &dec.c1.mul_vec(&x_hat)), &dec.d1.mul_vec(u_k));
    let d1_hat = gains.m1.mul_vec(&innov1);
    let d_hat_prev = dec.join_input(&state.d1_hat, &d2_hat);

    let rho = gains.next_metric_radius(state.rho);
    let delta_x = gains.euclidean_radius(rho);
    let delta_d_prev = gains.input_radius(state.delta_x);

    let finite = x_hat.iter().chain(&d1_hat).chain(&d_hat_prev).all(|v| v.is_finite());
    if !finite {
        return Err(Error::Numerical(format!("non-finite observer estimate at step {}", state.k + 1)));
    }
    Ok(ObserverState {
        k: state.k + 1,
        x_hat,
        x_star,
        d1_hat,
        d_hat_prev: Some(d_hat_prev),
        rho,
        delta_x,
        delta_d_prev: Some(delta_d_prev),
    })
}
