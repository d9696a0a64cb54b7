use std::path::PathBuf;

use thiserror::Error;

use crate::contract::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A run or model configuration is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract parse error: {0}")]
    Parse(#[from] ParseError),

    /// A statistic is undefined on its input (e.g. an empty edge set).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss = {loss}")]
    Divergence {
        epoch: usize,
        learning_rate: f64,
        loss: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Config(_) | Error::Parse(_) | Error::Format { .. }
        )
    }
}
