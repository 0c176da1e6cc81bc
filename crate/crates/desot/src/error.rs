use std::path::Path;

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, config, or input files.
    #[error("{0}")]
    Validation(String),
    /// Failure while doing otherwise valid work.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            Self::Validation(msg)
        } else {
            Self::Runtime(msg)
        }
    }
}

impl From<desot_core::Error> for CliError {
    fn from(e: desot_core::Error) -> Self {
        use desot_core::Error as E;
        match e {
            E::NonFinite(_) | E::NonFiniteLoss { .. } => Self::Runtime(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<crate::format::FormatError> for CliError {
    fn from(e: crate::format::FormatError) -> Self {
        Self::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

macro_rules! validation {
    ($($arg:tt)*) => { $crate::error::CliError::Validation(format!($($arg)*)) };
}
pub(crate) use validation;
