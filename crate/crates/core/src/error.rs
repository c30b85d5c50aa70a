use thiserror::Error;

/// Errors raised by the library. Statistical test failures are not errors;
/// they come back as reports with `pass == false`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("cone decomposition search failed: {0}")]
    ConeSearch(Box<crate::cone::SearchFailure>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}
