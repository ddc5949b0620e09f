use std::io;
use std::path::Path;

/// Malformed dataset or checkpoint bytes.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{what} at byte {offset}")]
pub struct FormatError {
    pub offset: usize,
    pub what: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// A config value is missing or out of range; `field` is its dotted path.
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Format { path: String, source: FormatError },
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error(transparent)]
    Core(#[from] fedlab_core::Error),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(context: impl AsRef<Path>, source: io::Error) -> Self {
        RunError::Io {
            context: context.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 for bad configuration or usage, 3 for numeric failures inside a
    /// run, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } | RunError::Usage(_) => 2,
            RunError::Core(e) if e.is_numeric() => 3,
            RunError::Core(fedlab_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;
