use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A scene entity or configuration value violates an invariant.
    #[error("invalid {entity}: {reason}")]
    Validation { entity: String, reason: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("time {t} s outside [{start}, {end}] for {what}")]
    OutOfRange {
        what: String,
        t: f64,
        start: f64,
        end: f64,
    },

    #[error("unknown window '{0}' (expected 'hann' or 'rect')")]
    UnknownWindow(String),

    #[error("insufficient frames: need {needed} from index {start}, have {available}")]
    InsufficientFrames {
        needed: usize,
        start: usize,
        available: usize,
    },

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),
}

impl Error {
    pub(crate) fn validation(entity: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            entity: entity.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
