use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite evaluation at x = {x}")]
    NonFinite { x: f64 },

    #[error("grid too coarse: {pieces} pieces requested on {cells} cells")]
    GridTooCoarse { pieces: usize, cells: usize },

    #[error("schedule search for step {step} exceeded index cap {cap}; failing condition: {condition}")]
    SearchCapExceeded {
        step: usize,
        cap: u64,
        condition: String,
    },

    #[error("certified invariant violated: {0}")]
    Violation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
