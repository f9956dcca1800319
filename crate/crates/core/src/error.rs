use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the denoising library.
#[derive(Debug, Error)]
pub enum NlpcaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate intensity: image has no positive value")]
    DegenerateIntensity,

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure in {context}: {message}")]
    Numeric { context: String, message: String },
}

impl NlpcaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NlpcaError::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        NlpcaError::ShapeMismatch(msg.into())
    }

    pub(crate) fn numeric(context: impl Into<String>, message: impl Into<String>) -> Self {
        NlpcaError::Numeric {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Prefixes the context of a numerical error, leaving other kinds untouched.
    pub fn with_context(self, outer: impl AsRef<str>) -> Self {
        match self {
            NlpcaError::Numeric { context, message } => NlpcaError::Numeric {
                context: format!("{}: {}", outer.as_ref(), context),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, NlpcaError>;
