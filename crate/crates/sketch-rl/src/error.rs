//! Error type shared across the crate.
//!
//! Every variant maps to a stable category string so the CLI can emit a
//! single machine-parseable line on failure.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("unknown question id: {0}")]
    UnknownQuestion(String),

    #[error("response outside policy support for question {question_id}: {response:?}")]
    UnsupportedResponse {
        question_id: String,
        response: String,
    },

    #[error("judge failure: {0}")]
    Judge(String),

    #[error("llm client transport failure: {0}")]
    Transport(String),

    #[error("unparseable judge reply: {raw:?}")]
    UnparseableReply { raw: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    /// Stable category slug used in CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Data(_) => "data",
            Error::UnknownQuestion(_) | Error::UnsupportedResponse { .. } => "policy",
            Error::Judge(_) | Error::UnparseableReply { .. } => "judge",
            Error::Transport(_) => "client",
            Error::NonFinite(_) => "numeric",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
