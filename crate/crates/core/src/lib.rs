//! White-box adversarial edits against differentiable text classifiers.
//!
//! Character flips, insertions and deletions are scored by directional
//! derivatives of the loss along the one-hot input, then combined by beam
//! search under a character budget. The crate also carries the classifiers
//! under attack, adversarial training, a constrained word-level variant and
//! the analyses that go with them.

pub mod analysis;
pub mod attack;
pub mod cli;
pub mod corpus;
mod error;
pub mod models;
pub mod robustness;
pub mod rng;
pub mod synth;
pub mod wordattack;

pub use error::{Error, Result};
