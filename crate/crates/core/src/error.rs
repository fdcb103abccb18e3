use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("insufficient to train a reliable LM: {0}")]
    InsufficientData(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("model format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("config error in field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("inconsistent cluster statistics: {0}")]
    InconsistentStats(String),

    #[error("unknown LM class `{0}`")]
    UnknownClass(String),

    #[error("registry has no context-independent fallback model")]
    MissingFallback,

    #[error("dialogue session is closed")]
    SessionClosed,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCorpus => "empty-corpus",
            Error::InsufficientData(_) => "insufficient-data",
            Error::InvalidArgument { .. } => "invalid-argument",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::InconsistentStats(_) => "inconsistent-stats",
            Error::UnknownClass(_) => "unknown-class",
            Error::MissingFallback => "missing-fallback",
            Error::SessionClosed => "session-closed",
            Error::Io(_) => "io",
        }
    }
}
