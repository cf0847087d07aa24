use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or config disagrees with the network configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Validation(String),

    /// A dataset file could not be read or is inconsistent.
    #[error("ingestion error at {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    /// A loss or gradient became NaN or infinite.
    #[error("numerical failure at step {step}: {detail}")]
    Numerical { step: u64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Torch(#[from] tch::TchError),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn ingestion(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingestion { path: path.into(), reason: reason.into() }
    }

    /// Attaches the training step to a numerical failure.
    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            Error::Numerical { detail, .. } => Error::Numerical { step, detail },
            other => other,
        }
    }

    /// Process exit code for the command-line tool, one per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Validation(_) => 3,
            Error::Ingestion { .. } => 4,
            Error::Numerical { .. } => 5,
            Error::Checkpoint(_) => 6,
            Error::Io(_) | Error::Image(_) | Error::Json(_) => 7,
            Error::Torch(_) => 8,
        }
    }
}
