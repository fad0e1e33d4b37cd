//! The operator set, implemented as methods on [`crate::Graph`].
//!
//! Every differentiable op follows the same shape: validate operand shapes,
//! compute the forward result, verify it is finite, and (only when some
//! operand requires grad) record a closure that accumulates exact analytic
//! gradients into the operands when the tape is replayed.

mod conv;
mod elementwise;
mod linalg;
mod nn;
mod norm;

pub use conv::conv_out_dim;
pub use nn::GruParams;
pub use norm::Axis;
