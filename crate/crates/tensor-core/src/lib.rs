//! Minimal reverse-mode automatic differentiation engine.
//!
//! The engine is deliberately small: a tape ([`Graph`]) records the fixed set
//! of operators used by the learned modules in this workspace, and replays
//! them in reverse to accumulate exact analytic gradients. Precision is fixed
//! at engine construction by instantiating [`Graph`] at `f32` or `f64`
//! (tests run the 64-bit engine, training the 32-bit one).
//!
//! Also provided: an [`adam`] optimizer, a finite-difference
//! [`gradcheck`] utility, a splittable counter-based [`rng`], and the
//! flat binary [`checkpoint`] format shared by every trained module.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use graph::Graph;
pub use params::ParamSet;
pub use rng::RngStream;
pub use scalar::{Precision, Scalar};
pub use tensor::{Tensor, TensorError};
