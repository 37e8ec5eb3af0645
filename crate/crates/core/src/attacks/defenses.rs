use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DenseSpectrum;
use crate::rng;

/// A perturbation `delta` added to a shared gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// i.i.d. `N(0, variance)` noise.
    Gaussian { variance: f64 },
    /// Zero the `floor(ratio * d)` smallest-magnitude coordinates.
    Prune { ratio: f64 },
    /// `scale` times the unit right-singular vector of `J` with the `index`-th largest singular value.
    SingularDirection { index: usize, scale: f64 },
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationSpec::Gaussian { variance }
                if !(variance >= 0.0 && variance.is_finite()) =>
            {
                Err(Error::Config(format!(
                    "variance must be >= 0, got {variance}"
                )))
            }
            PerturbationSpec::Prune { ratio } if !(0.0..=1.0).contains(&ratio) => Err(
                Error::Config(format!("prune ratio must lie in [0, 1], got {ratio}")),
            ),
            PerturbationSpec::SingularDirection { scale, .. }
                if !(scale >= 0.0 && scale.is_finite()) =>
            {
                Err(Error::Config(format!("scale must be >= 0, got {scale}")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            PerturbationSpec::Gaussian { variance } => format!("gaussian(var={variance})"),
            PerturbationSpec::Prune { ratio } => format!("prune(ratio={ratio})"),
            PerturbationSpec::SingularDirection { index, scale } => {
                format!("singular(index={index},scale={scale})")
            }
        }
    }

    /// Realizes `delta` for gradient `g`. Singular directions need the dense spectrum.
    pub fn realize(
        &self,
        g: &[f64],
        seed: u64,
        spectrum: Option<&DenseSpectrum>,
    ) -> Result<Vec<f64>> {
        self.validate()?;
        match *self {
            PerturbationSpec::Gaussian { variance } => {
                Ok(gaussian_perturbation(g, variance, seed).1)
            }
            PerturbationSpec::Prune { ratio } => Ok(prune_gradient(g, ratio).1),
            PerturbationSpec::SingularDirection { index, scale } => {
                let s = spectrum.ok_or_else(|| {
                    Error::Config("singular-direction perturbation needs a dense spectrum".into())
                })?;
                singular_direction_perturbation(s, index, scale)
            }
        }
    }
}

/// Returns `(g + delta, delta)` with `delta ~ N(0, variance I)`.
pub fn gaussian_perturbation(g: &[f64], variance: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng::seeded(seed);
    let delta: Vec<f64> = if variance > 0.0 {
        let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
        (0..g.len()).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; g.len()]
    };
    (crate::tensor::add(g, &delta), delta)
}

/// Returns `(pruned, pruned - g)`.
pub fn prune_gradient(g: &[f64], ratio: f64) -> (Vec<f64>, Vec<f64>) {
    let ratio = ratio.clamp(0.0, 1.0);
    let k = ((ratio * g.len() as f64) + 1e-9).floor() as usize;
    let k = k.min(g.len());
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()).then(a.cmp(&b)));
    let mut pruned = g.to_vec();
    for &i in &order[..k] {
        pruned[i] = 0.0;
    }
    let delta = pruned.iter().zip(g).map(|(p, o)| p - o).collect();
    (pruned, delta)
}

/// `scale * v_index`, with the sign fixed so the largest-magnitude entry is positive.
pub fn singular_direction_perturbation(
    spectrum: &DenseSpectrum,
    index: usize,
    scale: f64,
) -> Result<Vec<f64>> {
    let mut v = spectrum.right_singular_vector(index)?;
    let pivot = v.iter().enumerate().fold(
        0,
        |best, (i, x)| if x.abs() > v[best].abs() { i } else { best },
    );
    let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
    v.iter_mut().for_each(|x| *x *= sign * scale);
    Ok(v)
}
