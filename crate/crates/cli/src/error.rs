use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] phase_core::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub const CONFIG_EXIT: u8 = 2;
    pub const RUNTIME_EXIT: u8 = 3;

    /// Configuration problems and runtime failures map to distinct exit codes.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Read { .. } | CliError::Parse { .. } => {
                Self::CONFIG_EXIT
            }
            CliError::Write { .. } | CliError::Core(_) | CliError::Pool(_) => Self::RUNTIME_EXIT,
        }
    }

    /// Wraps a core error raised while interpreting configuration values.
    pub(crate) fn invalid(err: phase_core::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
