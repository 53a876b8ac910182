use thiserror::Error;

/// Errors raised by the estimator and the scenario tooling.
///
/// Mode indices are stored zero-based and printed one-based.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gain synthesis failed for mode {}: {reason}", .mode + 1)]
    Synthesis { mode: usize, reason: String },

    #[error("mode {} is not certified: contraction factor {theta} >= 1", .mode + 1)]
    Uncertified { mode: usize, theta: f64 },

    #[error("radius recursion diverges: contraction factor {0} >= 1")]
    DivergentRadius(f64),

    #[error("model mismatch: every mode eliminated at step {step}")]
    ModelMismatch { step: usize },

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("smallest nonzero singular value is undefined for a zero matrix")]
    ZeroMatrix,

    #[error("threshold is undefined at k = 0")]
    ZeroHorizon,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::ModelMismatch { .. } => 3,
            Error::Numerical(_) | Error::ZeroMatrix => 4,
            _ => 2,
        }
    }
}
