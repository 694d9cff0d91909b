use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall into two families: argument errors (a caller passed
/// something inconsistent) and data errors (the input itself is unusable).
/// The CLI maps the former to exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("component {index} has a zero column in factor {factor}")]
    DegenerateComponent { index: usize, factor: char },

    #[error("normal equations are numerically singular; use a damping parameter rho > 0")]
    NumericalRank,

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::DimensionMismatch {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    /// True for errors caused by the caller's arguments rather than the data.
    pub fn is_argument_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::NumericalRank
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
