use crate::data::wav::WavError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input of {len} samples is shorter than the {kernel}-sample kernel")]
    InputTooShort { len: usize, kernel: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("parameters do not match the configuration:\n{0}")]
    ParamMismatch(String),
    #[error("non-finite loss at step {step} (gradient norm {grad_norm})")]
    NonFinite { step: usize, grad_norm: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
