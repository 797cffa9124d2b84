//! One error type for the whole engine; no panics cross the public boundary.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes don't fit the operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A NaN or infinity reached a place that contractually holds finite values.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Input outside the operation's domain (empty set, missing class, k too large, ...).
    #[error("{0}")]
    Domain(String),

    /// Bad or inconsistent run configuration.
    #[error("config: {0}")]
    Config(String),

    /// All combined attention weights are zero; the bag embedding is undefined.
    #[error("degenerate attention: every combined weight is zero")]
    DegenerateAttention,

    /// A container file failed to parse or fails its integrity checks.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }
}
