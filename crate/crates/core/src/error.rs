use thiserror::Error;

/// Errors produced by the attribution library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature order {order} outside the accepted range 1..={cap}")]
    Budget { order: usize, cap: usize },

    #[error("a game needs at least one player")]
    EmptyGame,

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("dimension {dim} exceeds the limit of {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coalition size {s} out of range for {d} players")]
    CoalitionSize { s: usize, d: usize },

    #[error("reduction length {found} does not match plan length {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
