use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("site {site} out of range for {n} sites")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("temperature must be strictly positive, got kT = {0}")]
    NonPositiveTemperature(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sigma_F must be positive at every point (index {index} has {value})")]
    ZeroSigma { index: usize, value: f64 },

    #[error("no decay observed in the fidelity curve: {0}")]
    NoDecay(String),

    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("lattice with {n} sites exceeds the exact-enumeration cap of {cap}")]
    TooManySites { n: usize, cap: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
