use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng;

/// Generator of desk-scale stand-in data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticKind {
    /// One Gaussian cluster per class around a random center in `[0.2, 0.8]^d`.
    GaussianBlobs {
        #[serde(default = "ten")]
        classes: usize,
        #[serde(default = "spread")]
        spread: f64,
    },
    /// Two classes offset by `+-margin/2` along an alternating-sign direction
    /// orthogonal to the all-ones vector, so a bias-free linear model separates them.
    Separable2class { margin: f64 },
    /// Two classes by the parity of the cell of `(x_0, x_1)` in a `cells x cells` grid.
    Checkerboard {
        #[serde(default = "two")]
        cells: usize,
    },
}

fn ten() -> usize {
    10
}
fn two() -> usize {
    2
}
fn spread() -> f64 {
    0.1
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::GaussianBlobs { .. } => "gaussian_blobs",
            SyntheticKind::Separable2class { .. } => "separable_2class",
            SyntheticKind::Checkerboard { .. } => "checkerboard",
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            SyntheticKind::GaussianBlobs { classes, .. } => *classes,
            _ => 2,
        }
    }
}

/// Draws `n` samples of the given shape; entries are clipped to `[0, 1]`.
pub fn synthetic_samples(
    kind: &SyntheticKind,
    n: usize,
    shape: &[usize],
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("synthetic dataset needs n >= 1".into()));
    }
    let d: usize = shape.iter().product();
    if d == 0 {
        return Err(Error::Shape(format!(
            "sample shape {shape:?} has no entries"
        )));
    }
    let mut rng = rng::seeded(seed);
    let name = kind.name();
    let mut samples = Vec::with_capacity(n);
    match *kind {
        SyntheticKind::GaussianBlobs { classes, spread } => {
            if classes == 0 || !(spread >= 0.0) {
                return Err(Error::Config(
                    "gaussian_blobs needs classes >= 1 and spread >= 0".into(),
                ));
            }
            let centers: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..d).map(|_| rng.random_range(0.2..0.8)).collect())
                .collect();
            let noise = Normal::new(0.0, spread).expect("finite spread");
            for i in 0..n {
                let label = i % classes;
                let x = centers[label]
                    .iter()
                    .map(|c| (c + noise.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect();
                samples.push(Sample {
                    x,
                    label,
                    source: format!("{name}:{i}"),
                });
            }
        }
        SyntheticKind::Separable2class { margin } => {
            if !(0.0..=1.0).contains(&margin) {
                return Err(Error::Config(format!(
                    "margin must lie in [0, 1], got {margin}"
                )));
            }
            let mut a: Vec<f64> = (0..d)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect();
            if d % 2 == 1 && d > 1 {
                a[d - 1] = 0.0;
            }
            let aa = crate::tensor::dot(&a, &a);
            let noise_amp = 0.1 * (1.0 - margin);
            for i in 0..n {
                let label = i % 2;
                let s = if label == 1 { 1.0 } else { -1.0 };
                let mut noise: Vec<f64> = (0..d)
                    .map(|_| rng.random_range(-noise_amp..=noise_amp))
                    .collect();
                let along = crate::tensor::dot(&noise, &a) / aa;
                crate::tensor::axpy(-along, &a, &mut noise);
                let x = a
                    .iter()
                    .zip(&noise)
                    .map(|(ai, ni)| (0.5 + s * 0.5 * margin * ai + ni).clamp(0.0, 1.0))
                    .collect();
                samples.push(Sample {
                    x,
                    label,
                    source: format!("{name}:{i}"),
                });
            }
        }
        SyntheticKind::Checkerboard { cells } => {
            if d < 2 || cells == 0 {
                return Err(Error::Config(
                    "checkerboard needs at least two features and one cell".into(),
                ));
            }
            for i in 0..n {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let cell = |v: f64| ((v * cells as f64).floor() as usize).min(cells - 1);
                let label = (cell(x[0]) + cell(x[1])) % 2;
                samples.push(Sample {
                    x,
                    label,
                    source: format!("{name}:{i}"),
                });
            }
        }
    }
    Dataset::new(samples, kind.classes(), shape.to_vec())
}
