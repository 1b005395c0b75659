use thiserror::Error;

use crate::extproto::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate weights: weight sum must be positive and finite")]
    DegenerateWeights,

    #[error("invalid histogram bins: {0}")]
    InvalidBins(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric blow-up in IDM step (s={s}, v={v}, d={d}, omega={omega})")]
    NumericBlowup { s: f64, v: f64, d: f64, omega: f64 },

    /// Every importance sample received zero likelihood (noise-free dynamics
    /// queried with evidence the dynamics cannot produce).
    #[error("evidence has zero likelihood under every sample")]
    ZeroWeight,

    #[error("incomplete subset lattice: expected {expected} values, got {got}")]
    IncompleteLattice { expected: usize, got: usize },

    #[error("predictor `{tag}` failed: {message}")]
    Predictor { tag: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn predictor(tag: impl Into<String>, message: impl ToString) -> Self {
        Error::Predictor {
            tag: tag.into(),
            message: message.to_string(),
        }
    }
}
