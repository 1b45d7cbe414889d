//! Hierarchical scoring of long conversations with iterative refinement of
//! per-segment quality estimates.

pub mod corpus;
mod error;
pub mod analysis;
pub mod baselines;
pub mod encoder;
pub mod nn;
pub mod pipeline;
pub mod predictor;
pub mod sqe;

pub use error::{Error, Result};
