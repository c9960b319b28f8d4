use std::path::{Path, PathBuf};

use sgw_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 configuration, 3 numerical, 4 input/output.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } | CliError::Input(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { path, source } => CliError::Io { path, source },
            CoreError::Format(_) | CoreError::Parse { .. } => CliError::Input(e.to_string()),
            CoreError::Numerical(_) | CoreError::DegenerateFrame | CoreError::NoActivity => {
                CliError::Numerical(e.to_string())
            }
            CoreError::InvalidMesh(_)
            | CoreError::IndexOutOfRange(_)
            | CoreError::Disconnected { .. }
            | CoreError::TooLarge { .. }
            | CoreError::InvalidParameter(_)
            | CoreError::DimensionMismatch(_) => CliError::Config(e.to_string()),
        }
    }
}
