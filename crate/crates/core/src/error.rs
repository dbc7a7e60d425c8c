use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("prompt template is missing placeholder `{{{0}}}`")]
    MissingPlaceholder(String),

    #[error("missing artifact {path} (run the `{stage}` stage first)")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("row {row} is not unit-norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("unknown {target} id {id}")]
    UnknownId { target: crate::Target, id: u32 },

    #[error("need at least {needed} users to split, got {got}")]
    TooFewUsers { needed: usize, got: usize },

    #[error("encoder failed on {target} {subject}: {message}")]
    Encoder {
        target: crate::Target,
        subject: u32,
        message: String,
    },

    #[error("language model client: {0}")]
    Client(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
