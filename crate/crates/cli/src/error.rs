use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn key(key: &str, reason: &str) -> Self {
        CliError::Config(format!("`{key}`: {reason}"))
    }

    /// Library error raised while building objects from one config section.
    pub fn section(section: &str, e: solhmc::Error) -> Self {
        match e {
            solhmc::Error::NonFinite { .. } => CliError::Numerical(e.to_string()),
            e => CliError::Config(format!("[{section}] {e}")),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<solhmc::Error> for CliError {
    fn from(e: solhmc::Error) -> Self {
        match e {
            solhmc::Error::NonFinite { .. } => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}
