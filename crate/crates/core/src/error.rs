use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: cannot encode image: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("landmark {index}: {message}")]
    Landmark { index: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("all landmarks are collinear; cannot triangulate")]
    Collinear,

    #[error("instance too large for exhaustive enumeration: {labels}^{nodes} states exceeds {limit}")]
    TooLarge {
        labels: usize,
        nodes: usize,
        limit: u64,
    },

    #[error("no exemplars")]
    NoExemplars,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

macro_rules! ensure_same_size {
    ($a:expr, $b:expr, $what:expr) => {
        if $a.width() != $b.width() || $a.height() != $b.height() {
            return Err($crate::error::Error::DimensionMismatch(format!(
                "{}: {}x{} vs {}x{}",
                $what,
                $a.width(),
                $a.height(),
                $b.width(),
                $b.height()
            )));
        }
    };
}
pub(crate) use ensure_same_size;
