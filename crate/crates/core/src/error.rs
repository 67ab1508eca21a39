use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    #[error("non-finite value at step {step} ({stream})")]
    Numerical { step: usize, stream: String },

    #[error("backend error: {message}")]
    Backend { message: String, retryable: bool },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("backend timed out")]
    Timeout,

    #[error("png decode error: {0}")]
    Decode(String),

    #[error("unsupported image format: {0}")]
    Format(String),

    /// A failure raised while advancing one trajectory of a run.
    #[error("step {step} of {stream}: {source}")]
    InRun {
        step: usize,
        stream: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Whether retrying the same request could succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Backend { retryable, .. } => *retryable,
            Error::Timeout => true,
            Error::InRun { source, .. } => source.is_retryable(),
            _ => false,
        }
    }

    /// Field path for validation failures, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Parameter { field, .. } => Some(field),
            Error::InRun { source, .. } => source.field(),
            _ => None,
        }
    }

    pub(crate) fn in_run(self, step: usize, stream: &str) -> Self {
        match self {
            e @ Error::InRun { .. } => e,
            e => Error::InRun {
                step,
                stream: stream.to_string(),
                source: Box::new(e),
            },
        }
    }
}
