use std::path::PathBuf;

/// Errors raised by the toolkit.
///
/// The variants map onto the three failure classes the command-line front end
/// reports: bad arguments, bad data, and numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor or layer shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data is malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// A malformed line in a delimited text input.
    #[error("{path}:{line}: bad field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// A NaN or infinity appeared where finite values are required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A binary artifact could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
