use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("loss must be a 1x1 tensor, got {0}x{1}")]
    NotScalar(usize, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint array {name:?}: {detail}")]
    CorruptArray { name: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(NnError::Shape { op, detail: detail.into() })
}
