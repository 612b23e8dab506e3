use std::path::PathBuf;

/// Failure of a command, split by exit status: bad input (1) or a failed run (2).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error(transparent)]
    Core(#[from] mimic_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Core(mimic_core::Error::InvalidConfig { .. } | mimic_core::Error::Unknown { .. }) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
