//! Crate-wide error type.

use std::fmt;
use std::io;
use std::path::PathBuf;

/// Errors produced by the latentpinn crate.
#[derive(Debug)]
pub enum Error {
    /// An I/O operation failed; carries the path it failed on.
    Io { path: PathBuf, source: io::Error },
    /// A file did not match the expected on-disk format.
    Format(String),
    /// An argument or data structure violated a precondition.
    Validation(String),
    /// A training loop hit a non-recoverable numerical condition.
    Training(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "i/o error on {}: {source}", path.display()),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Training(msg) => write!(f, "training error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
