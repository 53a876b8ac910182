//! Scalar abstraction over `f32` and `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used throughout the estimator.
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Relative factor in the numerical-rank tolerance `max(rows, cols) * sigma_1 * factor`.
    const RANK_FACTOR: f64;

    /// Converts an `f64` constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Scalar for f64 {
    const RANK_FACTOR: f64 = 1e-12;
}

impl Scalar for f32 {
    const RANK_FACTOR: f64 = 1e-5;
}
