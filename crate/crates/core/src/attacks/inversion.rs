use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::derivatives::{JacobianOperator, SecondOrder};
use crate::error::{check_len, Error, Result};
use crate::models::{Model, ParameterSet};
use crate::rng;
use crate::tensor::{self, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Squared-distance gradient matching.
    Dgl,
    /// Cosine gradient matching.
    Gs,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Dgl => "dgl",
            AttackKind::Gs => "gs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyInit {
    Uniform01,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_epsilon: f64,
    #[serde(default = "default_init")]
    pub init: DummyInit,
    /// Projection of the dummy onto `[0, 1]` after every step; `None` picks the
    /// per-kind default (off for DGL, on for GS).
    #[serde(default)]
    pub box_projection: Option<bool>,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    3000
}
fn default_lr() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_init() -> DummyInit {
    DummyInit::Uniform01
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            iterations: default_iterations(),
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_epsilon: default_adam_eps(),
            init: default_init(),
            box_projection: None,
            seed: 0,
        }
    }

    pub fn projects(&self) -> bool {
        self.box_projection.unwrap_or(self.kind == AttackKind::Gs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("attack iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "attack learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryError {
    pub l2: f64,
    pub rmse: f64,
}

/// `L2 = ||x0 - x*||`, `RMSE = L2 / sqrt(d_x)`.
pub fn recovery_error(x0: &[f64], x_star: &[f64]) -> Result<RecoveryError> {
    check_len("recovered sample", x0.len(), x_star.len())?;
    let l2 = norm(&tensor::sub(x0, x_star));
    Ok(RecoveryError {
        l2,
        rmse: l2 / (x0.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AttackStatus {
    Completed,
    /// Stopped early; `recovered` is the best iterate before the failure.
    Aborted {
        iteration: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    /// Best-loss iterate.
    pub recovered: Vec<f64>,
    /// Inversion loss of every evaluated iterate, starting with the dummy.
    pub loss_trace: Vec<f64>,
    pub best_loss: f64,
    pub best_iteration: usize,
    pub status: AttackStatus,
    pub wall_time_secs: f64,
}

impl AttackResult {
    pub fn error_against(&self, x0: &[f64]) -> Result<RecoveryError> {
        recovery_error(x0, &self.recovered)
    }
}

/// Inversion loss at the operator's current sample and its gradient in `x`.
fn objective_and_grad(
    op: &mut SecondOrder<'_>,
    kind: AttackKind,
    target: &[f64],
    target_norm: f64,
) -> Result<(f64, Vec<f64>)> {
    let g = op.gradients()?.g_theta;
    match kind {
        AttackKind::Dgl => {
            let r = tensor::sub(&g, target);
            let loss = tensor::dot(&r, &r);
            let grad = tensor::scale(&op.jvp(&r)?, 2.0);
            Ok((loss, grad))
        }
        AttackKind::Gs => {
            let gn = norm(&g);
            if gn == 0.0 {
                return Err(Error::ZeroDenominator(
                    "cosine similarity (synthesized gradient is zero)",
                ));
            }
            let cos = tensor::dot(&g, target) / (gn * target_norm);
            // d(1 - cos)/dg = -(t / (|g||t|) - cos g / |g|^2)
            let dg: Vec<f64> = g
                .iter()
                .zip(target)
                .map(|(gi, ti)| cos * gi / (gn * gn) - ti / (gn * target_norm))
                .collect();
            Ok((1.0 - cos, op.jvp(&dg)?))
        }
    }
}

/// Inversion objective value at `x` (for checks; attacks use the engine directly).
pub fn inversion_objective(
    model: &Model,
    params: &ParameterSet,
    kind: AttackKind,
    target: &[f64],
    x: &[f64],
    label: usize,
) -> Result<f64> {
    check_len("target gradient", model.d_theta(), target.len())?;
    let mut op = SecondOrder::new(model, params, x, label)?;
    let tn = norm(target);
    if kind == AttackKind::Gs && tn == 0.0 {
        return Err(Error::ZeroDenominator(
            "cosine similarity (target gradient is zero)",
        ));
    }
    Ok(objective_and_grad(&mut op, kind, target, tn)?.0)
}

/// Recovers a sample whose gradient matches `target`; dispatches on `cfg.kind`.
pub fn attack(
    model: &Model,
    params: &ParameterSet,
    target: &[f64],
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    check_len("target gradient", model.d_theta(), target.len())?;
    let target_norm = norm(target);
    if cfg.kind == AttackKind::Gs && target_norm == 0.0 {
        return Err(Error::ZeroDenominator(
            "cosine similarity (target gradient is zero)",
        ));
    }
    let start = Instant::now();
    let mut rng = rng::seeded(cfg.seed);
    let d = model.d_x();
    let mut x: Vec<f64> = match cfg.init {
        DummyInit::Uniform01 => (0..d).map(|_| rng.random::<f64>()).collect(),
        DummyInit::Gaussian => rng::gaussian_vec(&mut rng, d),
    };
    let project = cfg.projects();
    if project {
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let mut op = SecondOrder::new(model, params, &x, label)?;
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut status = AttackStatus::Completed;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for it in 0..=cfg.iterations {
        let eval = op
            .set_sample(&x, label)
            .and_then(|_| objective_and_grad(&mut op, cfg.kind, target, target_norm));
        let (loss, grad) = match eval {
            Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => (l, g),
            Ok(_) => {
                status = AttackStatus::Aborted {
                    iteration: it,
                    reason: "non-finite inversion loss".into(),
                };
                break;
            }
            Err(e) => {
                status = AttackStatus::Aborted {
                    iteration: it,
                    reason: e.to_string(),
                };
                break;
            }
        };
        trace.push(loss);
        if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
            best = Some((loss, it, x.clone()));
        }
        if it == cfg.iterations {
            break;
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..d {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = m[i] / (1.0 - b1t);
            let vh = v[i] / (1.0 - b2t);
            x[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_epsilon);
            if project {
                x[i] = x[i].clamp(0.0, 1.0);
            }
        }
    }
    let Some((best_loss, best_iteration, recovered)) = best else {
        let (iteration, reason) = match status {
            AttackStatus::Aborted { iteration, reason } => (iteration, reason),
            AttackStatus::Completed => (0, "no iterate evaluated".into()),
        };
        return Err(Error::AttackAborted { iteration, reason });
    };
    Ok(AttackResult {
        recovered,
        loss_trace: trace,
        best_loss,
        best_iteration,
        status,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Squared-distance gradient matching.
pub fn dgl_attack(
    model: &Model,
    params: &ParameterSet,
    target: &[f64],
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    attack(
        model,
        params,
        target,
        label,
        &AttackConfig {
            kind: AttackKind::Dgl,
            ..*cfg
        },
    )
}

/// Cosine gradient matching.
pub fn gs_attack(
    model: &Model,
    params: &ParameterSet,
    target: &[f64],
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    attack(
        model,
        params,
        target,
        label,
        &AttackConfig {
            kind: AttackKind::Gs,
            ..*cfg
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_error_arithmetic() {
        let e = recovery_error(&[0.0; 4], &[1.0; 4]).unwrap();
        assert_eq!((e.l2, e.rmse), (2.0, 1.0));
        assert!(recovery_error(&[0.0; 3], &[0.0; 4]).is_err());
    }
}
