//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor ops, layers, model execution, file formats,
/// and the training loop.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape, rank, or extent mismatch.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Malformed or inconsistent external data (files, labels, manifests).
    #[error("data error: {0}")]
    Data(String),
    /// Operation invoked in an invalid state (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),
    /// NaN/Inf encountered or a numeric check failed.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Invalid model or run configuration.
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
