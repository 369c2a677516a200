use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Input data violates an operation's precondition.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Training produced a non-finite quantity.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("missing artifact: expected `{}`", .0.display())]
    MissingArtifact(PathBuf),

    #[error("malformed {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime abort.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Validation(_))
    }
}
