use thiserror::Error;

/// Errors produced by the library.
///
/// Variants map onto CLI exit codes: parameter and format problems are
/// caller mistakes, invariant violations mean an object does not satisfy the
/// structure it claims to have.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("premise violation: {0}")]
    PremiseViolation(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::InvariantViolation(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
