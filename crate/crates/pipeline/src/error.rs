use std::path::PathBuf;

use spikeprune_core::SnnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} needs the output of {required}; run `--stage {required}` first")]
    Dependency { stage: String, required: String },
    #[error("format error in {what} at byte {offset}: {reason}")]
    Format {
        what: String,
        offset: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] SnnError),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Dependency { .. } => 3,
            Self::Core(SnnError::Training { .. }) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, offset: u64, reason: impl Into<String>) -> Self {
        Self::Format {
            what: what.into(),
            offset,
            reason: reason.into(),
        }
    }
}
