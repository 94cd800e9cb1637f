use std::path::PathBuf;

use privlin_core::Error as CoreError;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Bad configuration or input file; maps to exit code 2.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Failure while a run was in progress; maps to exit code 1.
    #[error("run aborted (seed {seed}): {source}")]
    Run {
        seed: u64,
        #[source]
        source: CoreError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Episode at which a run aborted, if known.
    pub fn episode(&self) -> Option<usize> {
        match self {
            HarnessError::Run { source, .. } => source.episode(),
            _ => None,
        }
    }
}
