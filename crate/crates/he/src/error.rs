use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("multiplicative depth exhausted: operation needs level {required}, ciphertext is at level {available}")]
    LevelExhausted { required: usize, available: usize },
    #[error("cannot raise a ciphertext from level {from} to level {to}")]
    LevelRaise { from: usize, to: usize },
    #[error("scale mismatch: {left:e} vs {right:e}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("vector of length {length} exceeds capacity of {capacity} slots")]
    CapacityExceeded { length: usize, capacity: usize },
    #[error("cannot encrypt an empty vector")]
    Empty,
}

pub type Result<T, E = HeError> = std::result::Result<T, E>;
