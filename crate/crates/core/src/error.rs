use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected length {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("incompatible layers {first} -> {second}: {reason}")]
    LayerMismatch {
        first: String,
        second: String,
        reason: String,
    },

    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: String },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dense Jacobian needs {required} entries, budget is {budget}")]
    Budget { required: usize, budget: usize },

    #[error("matrix is singular or indefinite: {0}")]
    Singular(String),

    #[error(
        "eigenvalue {value:e} is below the rank threshold {threshold:e}; use the damped variant"
    )]
    BelowRankThreshold { value: f64, threshold: f64 },

    #[error("index {index} out of range (rank {rank})")]
    IndexOutOfRange { index: usize, rank: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("attack aborted at iteration {iteration}: {reason}")]
    AttackAborted { iteration: usize, reason: String },

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("bad magic number {found:#010x} in {path} (expected {expected:#010x})")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
