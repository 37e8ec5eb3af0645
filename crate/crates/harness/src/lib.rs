//! Experiment harness for gradient-leakage audits: JSON configs, the
//! desk-scale experiment suite and the oracle validation suite.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod stats;
pub mod validate;

pub use config::{ExperimentConfig, Overrides, Setup};
pub use error::{HarnessError, Result};
