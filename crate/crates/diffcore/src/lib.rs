//! Minimal dense-tensor reverse-mode differentiation.
//!
//! A [`Tape`] records primitives eagerly during a forward pass and replays
//! them backwards once. Scalars are `f64` throughout; non-finite values are
//! reported as [`DiffError::NonFinite`] instead of propagating silently.

mod tape;
mod tensor;

pub use tape::{softmax, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, DiffError>;
