use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum ViperError {
    /// An argument outside the domain of an operation (bad index, wrong dimension).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("format error in {path} at byte {offset}: {msg}", path = .path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    /// Malformed text artifact (dataset, spec, policy).
    #[error("parse error: {0}")]
    Parse(String),

    /// Numerical failure: divergence, lost definiteness.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ViperError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ViperError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        ViperError::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        ViperError::Numeric(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        ViperError::Parse(msg.into())
    }

    /// Prefix the message of a numeric error with extra context.
    pub fn with_context(self, ctx: &str) -> Self {
        match self {
            ViperError::Numeric(m) => ViperError::Numeric(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, ViperError>;
