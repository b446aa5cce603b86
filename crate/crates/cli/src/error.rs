use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mifi::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    /// 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(mifi::Error::Numeric(_)) | CliError::GradCheck(_) => 4,
            CliError::Core(_) | CliError::Io { .. } => 3,
        }
    }
}

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
