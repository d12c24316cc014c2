use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of bounds: {reason}")]
    OutOfBounds { index: usize, reason: String },

    #[error("value {value} outside range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("no trigger crossing above {0} V")]
    NoCrossing(f64),

    #[error("instance rejected: {0}")]
    Rejected(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate classes: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} is not finite ({v})")))
    }
}
