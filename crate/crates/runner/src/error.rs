use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot parse {path:?}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("i/o error at {path:?}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Scenario(String),
    #[error(transparent)]
    Core(#[from] evoshift_core::Error),
}

impl RunError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        RunError::Io { path: path.into(), message: err.to_string() }
    }
}
