use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Table enumeration would exceed the configured context cap.
    #[error("model too large: {vocab_size}^{context_order} contexts exceeds cap of {cap}")]
    Size {
        vocab_size: usize,
        context_order: usize,
        cap: u64,
    },

    #[error("{name} out of range: {reason}")]
    Range { name: &'static str, reason: String },

    #[error("context of length {len} is shorter than model order {order}")]
    Context { len: usize, order: usize },

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    /// Residual mass is zero (only possible when q == p).
    #[error("degenerate residual: max(0, q - p) has zero mass")]
    DegenerateResidual,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("logit buffer needs {required} B but SRAM holds {capacity} B")]
    Capacity { required: u64, capacity: u64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn range(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Range {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
