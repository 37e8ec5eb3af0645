//! Tensor-level reverse-mode differentiation that supports second derivatives.

mod ops;
mod tape;

pub use ops::{sigmoid, Activation, ConvGeom};
pub use tape::{Plan, Tape, Var};

pub(crate) use ops::{conv2d, log_sum_exp, mat_vec};
