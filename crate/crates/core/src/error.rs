use thiserror::Error;

use tensorcore::TensorError;

#[derive(Debug, Error)]
pub enum CsrlError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance {id}: invalid {field}: {message}")]
    Validation {
        id: String,
        field: &'static str,
        message: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid split ratios {0:?}")]
    Ratios(Vec<f64>),
    #[error("invalid loss weights {0:?}: weights must be finite and nonnegative")]
    LossWeights([f64; 3]),
    #[error("unknown ablation switch {0:?}")]
    UnknownSwitch(String),
    #[error("config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("conversation has {found} speakers; model supports {max}")]
    TooManySpeakers { found: usize, max: usize },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CsrlError>;
