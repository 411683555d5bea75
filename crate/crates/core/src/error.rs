use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),

    #[error("no score for document {0:?}")]
    MissingScore(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("optimizer failed: {0}")]
    Optimization(String),

    #[error("stage `{stage}` failed (inputs: {}): {source}", inputs.join(", "))]
    Stage {
        stage: String,
        inputs: Vec<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::DuplicateId { .. }
            | Error::Invalid(_)
            | Error::DimMismatch { .. }
            | Error::MissingEmbedding(_)
            | Error::MissingScore(_)
            | Error::Format(_)
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::File { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Optimization(_) | Error::Io(_) => false,
        }
    }
}
