use thiserror::Error;

use crate::detectors::MissingSignal;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: schema error in field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Missing(#[from] MissingSignal),

    #[error("no candidates for flagged record `{0}`")]
    NoCandidates(String),

    #[error("record `{id}`: scorer `{scorer}` has no value for candidate {index}")]
    CandidateScore {
        id: String,
        scorer: String,
        index: usize,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
