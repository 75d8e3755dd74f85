use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] nfmpc::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, message: impl ToString) -> Self {
        BenchError::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Core(nfmpc::Error::Config(_)) => 2,
            BenchError::Io { .. } | BenchError::Parse { .. } | BenchError::Core(nfmpc::Error::Io(_)) => 3,
            BenchError::Core(_) => 1,
        }
    }
}
