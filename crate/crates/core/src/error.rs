use thiserror::Error;

/// Errors raised by the arbor4d pipeline.
///
/// Variants split into two families: problems with the caller's input
/// (documents, shapes, parameters) and numerical failures inside an
/// otherwise well-formed computation. The CLI maps them onto distinct
/// exit codes via [`Error::is_input`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("invalid value at {path}: {reason}")]
    Invalid { path: String, reason: String },

    #[error("unsupported format `{found}` (expected `{expected}`)")]
    Format { expected: String, found: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True when the error stems from the caller's input rather than from
    /// the numerics.
    pub fn is_input(&self) -> bool {
        !matches!(self, Error::Numeric(_) | Error::Degenerate(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
