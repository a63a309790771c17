use std::fmt::Display;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures of the command-line layer, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {message}")]
    Input { context: String, message: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: twr_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn config(message: impl Display) -> Self {
        CliError::Config(message.to_string())
    }

    pub fn input(context: impl Display, message: impl Display) -> Self {
        CliError::Input {
            context: context.to_string(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration and file-system problems, 3 for invalid input
    /// data, 4 when an oracle check fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Input { .. } | CliError::Core { .. } => 3,
            CliError::Verification(_) => 4,
        }
    }
}

pub trait Context<T> {
    fn context(self, context: impl Display) -> Result<T>;
}

impl<T> Context<T> for twr_core::Result<T> {
    fn context(self, context: impl Display) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: context.to_string(),
            source,
        })
    }
}
