use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A size, index, grid or other parameter is outside its valid range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A matrix that must be positive definite was not.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    /// Too few usable points to fit an exponent.
    #[error("estimation error: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidConfig(msg.into()))
}
