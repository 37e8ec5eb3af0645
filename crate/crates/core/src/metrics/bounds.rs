use serde::{Deserialize, Serialize};

use super::power::{power_iteration, DifferenceOperator, PowerConfig};
use super::spectrum::SpectrumReport;
use crate::data::Sample;
use crate::derivatives::SecondOrder;
use crate::error::{Error, Result};
use crate::models::{Model, ParameterSet};
use crate::rng;
use crate::tensor::{self, norm};

/// `E ||(J J^T)^{-1} J delta||^2 = variance * sum_i 1/lambda_i` for `delta ~ N(0, variance I)`.
pub fn expected_gaussian_risk(spectrum: &SpectrumReport, variance: f64) -> Result<f64> {
    if let Some(&low) = spectrum
        .eigenvalues
        .iter()
        .find(|&&l| !(l > 0.0 && l >= spectrum.threshold))
    {
        return Err(Error::BelowRankThreshold {
            value: low,
            threshold: spectrum.threshold,
        });
    }
    Ok(variance * spectrum.eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>())
}

/// Damped counterpart: `variance * sum_i lambda_i / (lambda_i + eps)^2`.
pub fn expected_gaussian_risk_damped(
    spectrum: &SpectrumReport,
    variance: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return expected_gaussian_risk(spectrum, variance);
    }
    Ok(variance
        * spectrum
            .eigenvalues
            .iter()
            .map(|l| l / (l + epsilon).powi(2))
            .sum::<f64>())
}

/// Certified recovery-error lower bound `||J delta|| / (mu_L ||J|| + 2 mu_J ||g0 + delta||)`.
pub fn certified_bound(
    j_norm: f64,
    mu_l: f64,
    mu_j: f64,
    g0: &[f64],
    delta: &[f64],
    jdelta_norm: f64,
) -> Result<f64> {
    crate::error::check_len("delta", g0.len(), delta.len())?;
    let shifted = norm(&tensor::add(g0, delta));
    let denom = mu_l * j_norm + 2.0 * mu_j * shifted;
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator("mu_L ||J|| + 2 mu_J ||g0 + delta||"));
    }
    Ok(jdelta_norm / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzConfig {
    pub n_pairs: usize,
    pub radius: f64,
    pub seed: u64,
    pub power: PowerConfig,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            n_pairs: 10,
            radius: 1e-2,
            seed: 0,
            power: PowerConfig {
                max_iters: 100,
                tolerance: 1e-8,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub mu_l: f64,
    pub mu_j: f64,
    pub pairs: usize,
    pub radius: f64,
    /// Per-pair ratios `(||dg_theta||/||dx||, ||dJ||/||dx||)` in sampling order.
    pub per_pair: Vec<(f64, f64)>,
}

/// Empirical Lipschitz constants of `grad_theta L` and `J` in `x`.
///
/// Pair `k` uses sample `k mod n` and a direction drawn from a stream
/// derived from `(seed, k)`, so a larger `n_pairs` extends the same pair set.
pub fn estimate_lipschitz(
    model: &Model,
    params: &ParameterSet,
    samples: &[Sample],
    cfg: &LipschitzConfig,
) -> Result<LipschitzEstimate> {
    if cfg.n_pairs == 0 || samples.is_empty() {
        return Err(Error::Config(
            "Lipschitz estimation needs at least one pair and one sample".into(),
        ));
    }
    if !(cfg.radius > 0.0 && cfg.radius.is_finite()) {
        return Err(Error::Config(format!(
            "radius must be > 0, got {}",
            cfg.radius
        )));
    }
    let first = &samples[0];
    let mut a = SecondOrder::new(model, params, &first.x, first.label)?;
    let mut b = SecondOrder::new(model, params, &first.x, first.label)?;
    let mut per_pair = Vec::with_capacity(cfg.n_pairs);
    let (mut mu_l, mut mu_j) = (0.0f64, 0.0f64);
    for k in 0..cfg.n_pairs {
        let s = &samples[k % samples.len()];
        let mut rng = rng::seeded(rng::derive_seed(cfg.seed, k as u64));
        let dir = rng::unit_direction(&mut rng, s.x.len());
        let mut x2 = s.x.clone();
        tensor::axpy(cfg.radius, &dir, &mut x2);
        let dist = norm(&tensor::sub(&x2, &s.x));
        a.set_sample(&s.x, s.label)?;
        b.set_sample(&x2, s.label)?;
        let ga = a.gradients()?.g_theta;
        let gb = b.gradients()?.g_theta;
        let l_ratio = norm(&tensor::sub(&ga, &gb)) / dist;
        let power = PowerConfig {
            seed: rng::derive_seed(cfg.power.seed, k as u64),
            ..cfg.power
        };
        let mut diff = DifferenceOperator {
            a: &mut a,
            b: &mut b,
        };
        let top = power_iteration(&mut diff, &power)?.lambda_max.max(0.0);
        let j_ratio = top.sqrt() / dist;
        mu_l = mu_l.max(l_ratio);
        mu_j = mu_j.max(j_ratio);
        per_pair.push((l_ratio, j_ratio));
    }
    Ok(LipschitzEstimate {
        mu_l,
        mu_j,
        pairs: cfg.n_pairs,
        radius: cfg.radius,
        per_pair,
    })
}
