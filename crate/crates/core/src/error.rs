use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error("unknown relation label {0:?}")]
    UnknownLabel(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("annotation failed on turn {turn}: {message}")]
    Annotation { turn: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric divergence: {0}")]
    Numeric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("label space mismatch: {0}")]
    LabelSpace(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
