use std::path::PathBuf;

use mpjet_core::Error as CoreError;

/// Failures of the std front-end, grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: bad file format: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: corrupt file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path} not found; run `mpjet {producer}` first")]
    Missing { path: PathBuf, producer: &'static str },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Format { .. }
            | AppError::Corrupt { .. }
            | AppError::Missing { .. }
            | AppError::Io { .. }
            | AppError::Data(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::InvalidArgument(_) => AppError::Config(e.to_string()),
            CoreError::Validation(_) | CoreError::DegenerateScaling { .. } => AppError::Data(e.to_string()),
            CoreError::EmptySpectrum(_)
            | CoreError::UndefinedRelativeError
            | CoreError::NumericOverflow(_)
            | CoreError::TrainingDiverged { .. } => AppError::Numeric(e.to_string()),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
