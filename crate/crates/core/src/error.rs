use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the augmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error in example `{id}`: {message}")]
    Validation { id: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("lemma `{0}` is not in the causal space vocabulary")]
    OutOfVocabulary(String),
    #[error("span {start}..{end} is invalid for a sentence of {len} tokens")]
    Span { start: usize, end: usize, len: usize },
    #[error("structural error: {0}")]
    Structure(String),
    #[error("cannot route relation label `{0}`")]
    Routing(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("stage `{stage}` is missing upstream artifact {path}")]
    MissingArtifact { stage: String, path: PathBuf },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            id: id.into(),
            message: message.into(),
        }
    }
}
