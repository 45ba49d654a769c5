//! Reverse-mode automatic differentiation over dense f32 tensors.
//!
//! The graph is rebuilt on every forward pass. Parameters are named leaf
//! tensors that accumulate gradients until an optimizer step clears them.

mod gradcheck;
mod kernels;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::gradcheck;
pub use ops::{LAYER_NORM_EPS, MASK_FILL};
pub use optim::{adam_step, AdamState};
pub use tensor::{no_grad, Tensor};
