use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: missing or malformed field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("singular reduced mass matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("non-finite state at t = {t}: last good state {last_good}")]
    NonFinite { t: f64, last_good: String },

    #[error("no feasible periodic orbit: {0}")]
    Infeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
