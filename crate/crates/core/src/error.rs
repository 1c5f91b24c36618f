use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("matrix is not positive definite (jitter cap {0:e} exceeded)")]
    NotPositiveDefinite(f64),

    #[error("zero pivot in triangular solve")]
    ZeroPivot,

    #[error("degenerate point set")]
    DegeneratePointSet,

    #[error("kernel is not positive semidefinite: quadratic form {0:e}")]
    NotPsd(f64),

    #[error("recombination failed: {0}")]
    Recombination(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by malformed input rather than a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch { .. }
                | Error::NonFinite(_)
                | Error::InvalidArgument(_)
                | Error::IndexOutOfRange { .. }
                | Error::InvalidWeights(_)
                | Error::Parse(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
