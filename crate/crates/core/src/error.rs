//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A computation produced NaN or infinity.
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    /// A multiplier that must stay away from zero got too small.
    #[error("singularity: {0}")]
    Singularity(String),

    /// Input values outside their declared domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed file contents. `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A serialized file carries a version this build does not understand.
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    /// Invalid configuration value or unknown key.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical routine failure (e.g. an eigensolve that did not converge).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}
