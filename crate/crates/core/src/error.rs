use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("training diverged at step {step} (pair seed {pair_seed}): loss {loss}")]
    Diverged { step: usize, pair_seed: u64, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed header: {0}")]
    Header(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::State(_) => "state",
            Error::NonFinite(_) => "non_finite",
            Error::Parse { .. } => "parse",
            Error::Degenerate(_) => "degenerate",
            Error::Invalid(_) => "invalid",
            Error::Checkpoint(_) => "checkpoint",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
