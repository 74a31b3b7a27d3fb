//! Minimal dense-tensor library with reverse-mode automatic differentiation.
//!
//! Everything is 64-bit and CPU-only: a [`Tensor`] is a plain row-major
//! value, a [`Tape`] records executed operations and replays them in
//! reverse to accumulate gradients, and [`adam_step`] applies the Adam
//! update. The operation set is exactly what an attention-over-sentences
//! network needs — matmul, same-padding 1-d convolution, masked softmax,
//! relu / dropout / batchnorm, MSE and categorical cross-entropy — plus a
//! few structural ops (concat, slice, transpose, pooling).

mod adam;
mod error;
mod tape;
mod tensor;

pub mod gradcheck;

pub use adam::{adam_step, AdamParams, AdamState};
pub use error::{NdError, Result};
pub use tape::{BnConfig, BnStats, Mode, Tape, Var};
pub use tensor::Tensor;
