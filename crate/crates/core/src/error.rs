use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while building networks, loading inputs, or running experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("position {position} m outside road [0, {total_length})")]
    OutOfRange { position: f64, total_length: f64 },

    #[error("network has no restricted lane")]
    NoRestrictedLane,

    #[error("invalid scale factor {0}: must be positive")]
    InvalidScale(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation failed: {invariant}")]
    Validation { invariant: String },

    #[error("record {id} is incomplete: missing {missing}")]
    IncompleteRecord { id: u64, missing: &'static str },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("simulation did not drain within {limit_s} s of simulated time")]
    Stalled { limit_s: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(invariant: impl Into<String>) -> Self {
        Error::Validation {
            invariant: invariant.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv(_) | Error::Stalled { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
