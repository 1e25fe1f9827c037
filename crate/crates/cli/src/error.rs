use std::path::PathBuf;

use ensemble_control::Error as CoreError;

/// Process exit codes. Usage errors reported by the argument parser also
/// exit with [`exit::CONFIG`].
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const SHAPE: u8 = 3;
    pub const INTEGRATION: u8 = 4;
    pub const DECOMPOSITION: u8 = 5;
    pub const FILE_MISMATCH: u8 = 6;
    pub const IO: u8 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration; the message names the offending field.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An input file does not fit the configured experiment.
    #[error("{path}: {message}")]
    FileMismatch { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::FileMismatch { .. } => exit::FILE_MISMATCH,
            Self::Io { .. } => exit::IO,
            Self::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InvalidArgument(_) => exit::CONFIG,
        CoreError::OverdeterminedShape { .. } => exit::SHAPE,
        CoreError::IntegrationFailure { .. } => exit::INTEGRATION,
        CoreError::EnsembleFailure { failures } => failures
            .first()
            .map_or(exit::INTEGRATION, |(_, e)| core_exit_code(e)),
        CoreError::Decomposition(_) => exit::DECOMPOSITION,
        CoreError::DimensionMismatch(_) | CoreError::Format(_) | CoreError::Csv(_) => {
            exit::FILE_MISMATCH
        }
        CoreError::Io(_) => exit::IO,
    }
}

pub type CliResult<T> = Result<T, CliError>;
