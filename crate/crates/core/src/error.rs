use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed tensor: {0}")]
    MalformedTensor(String),

    #[error("grid size {0} must be a power of two and at least 8")]
    InvalidGrid(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown builtin system `{0}` (expected `single` or `wzy`)")]
    UnknownSystem(String),

    #[error("gauge transform refused: {0}")]
    GaugeRefused(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate ladder: {0}")]
    DegenerateLadder(String),

    #[error("blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
