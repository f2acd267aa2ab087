use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, channel counts or option values that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse such as running backward on an empty tape.
    #[error("usage error: {0}")]
    Usage(String),

    /// A raster value that is NaN or infinite where finite data is required.
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    /// Malformed or inconsistent dataset content.
    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    /// Malformed binary container (raster file or checkpoint).
    #[error("format error: {0}")]
    Format(String),

    #[error("training error at iteration {iteration}: {message}")]
    Training { iteration: u64, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
