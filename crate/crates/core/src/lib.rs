//! Gradient-leakage privacy auditing.
//!
//! Measures how much a perturbation of a shared gradient moves the sample a
//! gradient-inversion attacker can recover, via the inversion influence
//! `||(J J^T + eps I)^{-1} J delta||` with `J` the mixed second derivative of the
//! loss in input and parameters.

pub mod attacks;
pub mod autograd;
pub mod data;
pub mod derivatives;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
