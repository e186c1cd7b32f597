//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the elite-pixel toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("trailing data after payload: {extra} extra bytes")]
    TrailingData { extra: u64 },

    #[error("invalid stack: {0}")]
    InvalidStack(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid scene spec: {0}")]
    InvalidSceneSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tile structure error: {0}")]
    TileStructure(String),

    #[error("empty PS candidate set: no DS candidate can be accepted")]
    EmptyPsSet,

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("non-finite gradient in `{name}` at flat index {index}")]
    NonFiniteGradient { name: String, index: usize },

    #[error("uninitialized batch-norm running statistics: run at least one training step first")]
    UninitializedRunningStats,

    #[error("training diverged (non-finite loss) at epoch {epoch}; last good checkpoint retained")]
    Diverged {
        epoch: usize,
        output: Box<crate::train::FitOutput>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
