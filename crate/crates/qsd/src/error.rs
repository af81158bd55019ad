use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsdError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid state or model: {0}")]
    Validation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("trajectory {trajectory} aborted: {message}")]
    Numerical { trajectory: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl QsdError {
    /// 2 for bad input, 3 for a numerical abort, 1 for IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Validation(_) | Self::Parse(_) => 2,
            Self::Numerical { .. } => 3,
            Self::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
