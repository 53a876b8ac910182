//! Hidden-mode switched system: per-mode plant descriptions, noise bounds and
//! the one-step plant map.

use crate::error::{Error, Result};
use crate::linalg::{norm, vec_ops, Mat};
use crate::scalar::Scalar;

/// Tolerance below which a supplied Lipschitz constant may undercut the
/// computed one.
const LIPSCHITZ_SLACK: f64 = 1e-9;

/// Nonlinear part of the state map.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldDescriptor<T> {
    /// `f(x) = a_hat x + a_tilde gamma(x)` with `gamma_i(x) = sin(x_i) / 2`.
    LinearSinusoidal { a_hat: Mat<T>, a_tilde: Mat<T> },
    /// `f(x) = a x`.
    Linear { a: Mat<T> },
}

impl<T: Scalar> FieldDescriptor<T> {
    pub fn dim(&self) -> usize {
        match self {
            FieldDescriptor::LinearSinusoidal { a_hat, .. } => a_hat.rows(),
            FieldDescriptor::Linear { a } => a.rows(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            FieldDescriptor::LinearSinusoidal { a_hat, a_tilde } => {
                a_hat.is_square() && a_tilde.shape() == a_hat.shape()
            }
            FieldDescriptor::Linear { a } => a.is_square(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("field matrices must be square and of equal size".into()))
        }
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        match self {
            FieldDescriptor::LinearSinusoidal { a_hat, a_tilde } => {
                let half = T::lit(0.5);
                let g: Vec<T> = x.iter().map(|&xi| xi.sin() * half).collect();
                vec_ops::add(&a_hat.mul_vec(x), &a_tilde.mul_vec(&g))
            }
            FieldDescriptor::Linear { a } => a.mul_vec(x),
        }
    }

    /// Global Lipschitz constant in the Euclidean norm.
    pub fn lipschitz_constant(&self) -> T {
        match self {
            FieldDescriptor::LinearSinusoidal { a_hat, a_tilde } => {
                norm(a_hat) + T::lit(0.5) * norm(a_tilde)
            }
            FieldDescriptor::Linear { a } => norm(a),
        }
    }

    /// Jacobian at the origin and a bound on the Hessian operator norm.
    pub fn jacobian_hessian_data(&self) -> (Mat<T>, T) {
        match self {
            FieldDescriptor::LinearSinusoidal { a_hat, a_tilde } => {
                (a_hat + &a_tilde.scale(T::lit(0.5)), T::lit(0.5) * norm(a_tilde))
            }
            FieldDescriptor::Linear { a } => (a.clone(), T::zero()),
        }
    }

    /// Matrices whose convex hull contains every difference quotient of `f`:
    /// `f(x) - f(y) = J (x - y)` for some `J` in the hull.
    pub fn slope_vertices(&self) -> Vec<Mat<T>> {
        match self {
            FieldDescriptor::LinearSinusoidal { a_hat, a_tilde } => {
                let n = a_hat.rows();
                let half = T::lit(0.5);
                (0..1usize << n)
                    .map(|bits| {
                        let c: Vec<T> = (0..n)
                            .map(|i| if bits >> i & 1 == 1 { half } else { -half })
                            .collect();
                        a_hat + &a_tilde.matmul(&Mat::diag(&c))
                    })
                    .collect()
            }
            FieldDescriptor::Linear { a } => vec![a.clone()],
        }
    }
}

/// One mode of the switched system:
/// `x+ = f(x) + B u + G d + W w`, `y = C x + D u + H d + v`.
#[derive(Clone, Debug)]
pub struct ModeModel<T> {
    pub field: FieldDescriptor<T>,
    pub b: Mat<T>,
    pub g: Mat<T>,
    pub c: Mat<T>,
    pub d: Mat<T>,
    pub h: Mat<T>,
    pub w: Mat<T>,
    /// Lipschitz constant of the field, at least the computed one.
    pub lipschitz: T,
}

/// Dimensions `(n, m, p, l)`: state, known input, unknown input, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeDims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub l: usize,
}

impl<T: Scalar> ModeModel<T> {
    /// Validates shapes. A missing Lipschitz constant is computed from the
    /// field; a supplied one smaller than the computed one is rejected.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        field: FieldDescriptor<T>,
        b: Mat<T>,
        g: Mat<T>,
        c: Mat<T>,
        d: Mat<T>,
        h: Mat<T>,
        w: Option<Mat<T>>,
        lipschitz: Option<T>,
    ) -> Result<Self> {
        field.validate()?;
        let n = field.dim();
        let w = w.unwrap_or_else(|| Mat::identity(n));
        let (m, p, l) = (b.cols(), g.cols(), c.rows());
        let checks = [
            ("B", b.shape(), (n, m)),
            ("G", g.shape(), (n, p)),
            ("C", c.shape(), (l, n)),
            ("D", d.shape(), (l, m)),
            ("H", h.shape(), (l, p)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Config(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        if w.rows() != n {
            return Err(Error::Config(format!("W has {} rows, expected {n}", w.rows())));
        }
        let all = [&b, &g, &c, &d, &h, &w];
        if !all.iter().all(|m| m.is_finite()) {
            return Err(Error::Config("non-finite system matrix".into()));
        }
        let computed = field.lipschitz_constant();
        let lipschitz = match lipschitz {
            Some(lf) if lf < computed - T::lit(LIPSCHITZ_SLACK) => {
                return Err(Error::Config(format!(
                    "Lipschitz constant {lf} below the computed bound {computed}"
                )))
            }
            Some(lf) => lf,
            None => computed,
        };
        Ok(ModeModel { field, b, g, c, d, h, w, lipschitz })
    }

    /// Converts every matrix to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ModeModel<U> {
        let field = match &self.field {
            FieldDescriptor::LinearSinusoidal { a_hat, a_tilde } => {
                FieldDescriptor::LinearSinusoidal { a_hat: a_hat.cast(), a_tilde: a_tilde.cast() }
            }
            FieldDescriptor::Linear { a } => FieldDescriptor::Linear { a: a.cast() },
        };
        ModeModel {
            field,
            b: self.b.cast(),
            g: self.g.cast(),
            c: self.c.cast(),
            d: self.d.cast(),
            h: self.h.cast(),
            w: self.w.cast(),
            lipschitz: U::lit(self.lipschitz.as_f64()),
        }
    }

    pub fn dims(&self) -> ModeDims {
        ModeDims { n: self.field.dim(), m: self.b.cols(), p: self.g.cols(), l: self.c.rows() }
    }

    /// Process-noise dimension (columns of `W`).
    pub fn noise_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Bounds `||w|| <= eta_w`, `||v|| <= eta_v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseBounds<T> {
    pub eta_w: T,
    pub eta_v: T,
}

/// Optional a-priori bounds on the state and output trajectories, used by the
/// detectability analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryBounds<T> {
    pub r_x: T,
    pub r_y: T,
}

#[derive(Clone, Debug)]
pub struct SwitchedSystem<T> {
    pub modes: Vec<ModeModel<T>>,
    pub noise: Vec<NoiseBounds<T>>,
    pub x_hat0: Vec<T>,
    pub delta_x0: T,
    pub bounds: Option<TrajectoryBounds<T>>,
}

impl<T: Scalar> SwitchedSystem<T> {
    /// Checks that all modes share `n`, `l` and `m`, that noise bounds are
    /// nonnegative and one per mode, and that the initial ball fits.
    pub fn new(
        modes: Vec<ModeModel<T>>,
        noise: Vec<NoiseBounds<T>>,
        x_hat0: Vec<T>,
        delta_x0: T,
        bounds: Option<TrajectoryBounds<T>>,
    ) -> Result<Self> {
        let first = modes.first().ok_or_else(|| Error::Config("at least one mode is required".into()))?.dims();
        for (q, mode) in modes.iter().enumerate() {
            let d = mode.dims();
            if (d.n, d.l, d.m) != (first.n, first.l, first.m) {
                return Err(Error::Config(format!(
                    "mode {} has (n, l, m) = ({}, {}, {}), mode 1 has ({}, {}, {})",
                    q + 1,
                    d.n,
                    d.l,
                    d.m,
                    first.n,
                    first.l,
                    first.m
                )));
            }
        }
        if noise.len() != modes.len() {
            return Err(Error::Config("one noise bound per mode is required".into()));
        }
        if noise.iter().any(|nb| !(nb.eta_w >= T::zero() && nb.eta_v >= T::zero())) {
            return Err(Error::Config("noise bounds must be nonnegative".into()));
        }
        if !(delta_x0 >= T::zero()) {
            return Err(Error::Config("initial radius must be nonnegative".into()));
        }
        if x_hat0.len() != first.n {
            return Err(Error::Config(format!(
                "initial estimate has length {}, expected {}",
                x_hat0.len(),
                first.n
            )));
        }
        Ok(SwitchedSystem { modes, noise, x_hat0, delta_x0, bounds })
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn check_mode(&self, q: usize) -> Result<()> {
        if q < self.modes.len() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "mode index {} out of range 1..={}",
                q + 1,
                self.modes.len()
            )))
        }
    }
}

/// One plant step: returns `(x_{k+1}, y_k)`.
pub fn simulate_plant<T: Scalar>(
    mode: &ModeModel<T>,
    x: &[T],
    u: &[T],
    d: &[T],
    w: &[T],
    v: &[T],
) -> (Vec<T>, Vec<T>) {
    let y = vec_ops::sum(&[&mode.c.mul_vec(x), &mode.d.mul_vec(u), &mode.h.mul_vec(d), v]);
    let x_next = vec_ops::sum(&[
        &mode.field.eval(x),
        &mode.b.mul_vec(u),
        &mode.g.mul_vec(d),
        &mode.w.mul_vec(w),
    ]);
    (x_next, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoidal_identity(n: usize) -> FieldDescriptor<f64> {
        FieldDescriptor::LinearSinusoidal { a_hat: Mat::zeros(n, n), a_tilde: Mat::identity(n) }
    }

    #[test]
    fn lipschitz_of_half_sine() {
        assert!((sinusoidal_identity(3).lipschitz_constant() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jacobian_at_origin() {
        let (j, h) = sinusoidal_identity(2).jacobian_hessian_data();
        assert!(j.approx_eq(&Mat::identity(2).scale(0.5), 1e-15));
        assert!((h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_lipschitz() {
        let f = FieldDescriptor::Linear { a: Mat::identity(2).scale(2.0) };
        let r = ModeModel::new(
            f,
            Mat::zeros(2, 0),
            Mat::zeros(2, 0),
            Mat::identity(2),
            Mat::zeros(2, 0),
            Mat::zeros(2, 0),
            None,
            Some(1.0),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        let f = FieldDescriptor::Linear { a: Mat::<f64>::identity(2) };
        let r = ModeModel::new(
            f,
            Mat::zeros(2, 1),
            Mat::zeros(2, 1),
            Mat::identity(2),
            Mat::zeros(2, 1),
            Mat::zeros(3, 1),
            None,
            None,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
