//! Set-valued estimation of the active mode, the state and the unknown input
//! of hidden-mode switched nonlinear discrete-time systems with norm-bounded
//! noise.
//!
//! A bank of mode-matched observers produces, for every mode, a state ball
//! and an unknown-input ball whose radii are guaranteed when that mode is
//! active. Each observer's residual is compared against an a-priori bound;
//! a mode whose residual exceeds its bound cannot be active and is
//! eliminated for good.

pub mod decomposition;
pub mod detectability;
pub mod error;
pub mod gains;
pub mod linalg;
pub mod mode_estimator;
pub mod observer;
pub mod residual;
pub mod scalar;
pub mod scenario;
pub mod sdp;
pub mod system;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Mat<f64>;
pub type Mode = system::ModeModel<f64>;
pub type System = system::SwitchedSystem<f64>;
pub type Decomposition = decomposition::ModeDecomposition<f64>;
pub type Gains = gains::ObserverGains<f64>;
pub type Observer = observer::ObserverState<f64>;
pub type Thresholds = residual::ThresholdTable<f64>;
