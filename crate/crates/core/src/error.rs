use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("degenerate scaling: all {count} values equal {value}")]
    DegenerateScaling { count: usize, value: f64 },
    #[error("empty spectrum: {0}")]
    EmptySpectrum(String),
    #[error("relative error undefined: reference norm is zero")]
    UndefinedRelativeError,
    #[error("numeric overflow in {0}")]
    NumericOverflow(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid;
