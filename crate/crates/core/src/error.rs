//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown model kind '{given}', expected one of: {expected}")]
    UnknownModelKind { given: String, expected: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {count} malformed line(s), first at line {first_line}: {detail}")]
    MalformedInput {
        path: String,
        count: usize,
        first_line: usize,
        detail: String,
    },

    #[error("corrupt split file: {0}")]
    CorruptSplit(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("user {user} has interacted with every item; cannot sample a negative")]
    NoNegativeItems { user: usize },

    #[error("non-finite gradient for {param} at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("no ranked users: {0}")]
    EmptyEvaluation(String),

    #[error("timer resolution too coarse for {pairs} pairs; rerun with a larger --pairs")]
    TimerResolution { pairs: usize },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
