use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants fall into three families that front ends report differently:
/// invalid arguments or degenerate inputs, malformed files, and numeric
/// failures inside the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("classification data must contain both classes")]
    SingleClass,

    #[error("degenerate regularization path: lambda_max is zero (features carry no signal for the targets)")]
    DegeneratePath,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("solver produced a non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("while solving at lambda={lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
