//! Crate-wide error type and result alias.

use std::fmt;
use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the pipeline.
#[derive(Debug)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    Shape(String),
    /// A requested allocation would exceed addressable size.
    Size(String),
    /// A reduction or statistic was requested over an empty extent.
    Domain(String),
    /// An operation parameter is outside its documented range.
    Parameter(String),
    /// A caller violated an API contract (mismatched cache, malformed target, ...).
    Contract(String),
    /// Invalid model/dataset/CLI configuration.
    Config(String),
    /// Filesystem failure while reading or writing an artifact.
    Io { path: PathBuf, source: std::io::Error },
    /// A file's bytes do not match the expected on-disk format.
    Format(String),
    /// A non-finite value surfaced where finite numbers are required.
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Size(msg) => write!(f, "size error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io { path, source } => write!(f, "i/o error on {}: {source}", path.display()),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
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
