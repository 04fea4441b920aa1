use thiserror::Error;

/// Errors produced by the geometry, control and Jacobi kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    /// Input outside the mathematical domain of an operation (zero vector,
    /// point outside a chart, degenerate flag, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed construction data (non-SPD metric, wind too strong, shape
    /// mismatch, unknown catalog name, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Numerical failure: ill-conditioning, non-convergence, blowup.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Parse failure for one of the file formats.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(GeomError::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(GeomError::InvalidInput(msg.into()))
}
