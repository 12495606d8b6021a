use std::io;

use thiserror::Error;

/// Errors produced anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents that do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Transform length not supported (e.g. not a power of two).
    #[error("sizing error: {0}")]
    Sizing(String),
    /// An argument outside its documented domain.
    #[error("usage error: {0}")]
    Usage(String),
    /// A required input (file, prior, dataset entry) is absent.
    #[error("missing input: {0}")]
    MissingInput(String),
    /// A computation produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A request that exceeds the configured memory budget.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Malformed on-disk data.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
