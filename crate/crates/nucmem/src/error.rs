use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a pipeline command, classified by exit code.
#[derive(Debug, Error)]
pub enum AppError {
    /// Invalid configuration; the message names the offending field.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input {}: {what}", path.display())]
    MissingInput { path: PathBuf, what: String },
    #[error("{0}")]
    Runtime(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::MissingInput { .. } => 3,
            AppError::Runtime(_) => 4,
        }
    }

    pub fn missing(path: &Path, what: impl Into<String>) -> Self {
        AppError::MissingInput {
            path: path.to_path_buf(),
            what: what.into(),
        }
    }

    pub fn runtime(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        AppError::Runtime(format!("{context}: {err}"))
    }

    /// Error from reading `path`: a missing file is a missing input,
    /// anything else a runtime failure.
    pub fn read(path: &Path, what: &str, err: std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            Self::missing(path, what)
        } else {
            Self::runtime(format!("reading {}", path.display()), err)
        }
    }
}

impl From<nucmem_core::Error> for AppError {
    fn from(e: nucmem_core::Error) -> Self {
        use nucmem_core::Error as E;
        match e {
            E::Config { field, reason } => AppError::Config(format!("{field}: {reason}")),
            E::InsufficientDocuments { .. } => AppError::Config(e.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}
