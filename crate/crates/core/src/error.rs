use thiserror::Error;

/// Errors produced by the despeckling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient group: need at least {needed} patches, got {got}")]
    InsufficientGroup { needed: usize, got: usize },

    #[error("empty aggregation: no groups supplied")]
    EmptyAggregation,

    #[error("region out of bounds: {0}")]
    Region(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that originate from file handling rather than numerics.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format { .. } | Error::Json(_) | Error::Config { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
