//! Error type shared by every module of the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The vector norm is below the routing floor; its direction is meaningless.
    #[error("vector norm {norm:e} is below the zero-norm floor")]
    ZeroNorm { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires at least one stored key")]
    EmptyCodebook,

    #[error("vector contains a non-finite component at index {index}")]
    NonFinite { index: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Payload training loss or an iteration energy became NaN or infinite.
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time budget of {limit_secs:.1}s exceeded after {edits} edits")]
    ResourceBudgetExceeded { limit_secs: f64, edits: usize },

    #[error("malformed codebook file: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
