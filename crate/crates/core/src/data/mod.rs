//! Sample sources and output artifacts.

mod idx;
mod pgm;
mod report;
mod synthetic;

pub use idx::{load_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use pgm::{encode_pgm, read_pgm, write_pgm, GrayImage};
pub use report::{format_float, read_report_csv, write_report_csv, Cell, Report};
pub use synthetic::{synthetic_samples, SyntheticKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Flattened image, entries in `[0, 1]`.
    pub x: Vec<f64>,
    pub label: usize,
    /// Where the sample came from, e.g. `idx:17` or `gaussian_blobs:3`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: usize,
    pub shape: Vec<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, classes: usize, shape: Vec<usize>) -> Result<Self> {
        let d: usize = shape.iter().product();
        for s in &samples {
            crate::error::check_len("sample", d, s.x.len())?;
            if s.label >= classes {
                return Err(Error::Label {
                    label: s.label,
                    classes,
                });
            }
        }
        Ok(Self {
            samples,
            classes,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples (or all of them).
    pub fn truncated(mut self, n: usize) -> Self {
        self.samples.truncate(n);
        self
    }
}
