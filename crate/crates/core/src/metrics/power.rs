use serde::{Deserialize, Serialize};

use crate::derivatives::{JacobianOperator, SecondOrder};
use crate::error::{check_len, Result};
use crate::models::{Model, ParameterSet};
use crate::rng;
use crate::tensor::{self, norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub max_iters: usize,
    /// Stop when successive Rayleigh quotients differ by less than this, relatively.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub lambda_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Unit top eigenvector estimate of `J J^T` (x-space).
    pub vector: Vec<f64>,
    /// Rayleigh quotient after every iteration.
    pub trace: Vec<f64>,
}

/// Top eigenvalue of `J J^T` by the iteration `v <- J (J^T v) / ||J (J^T v)||`.
pub fn power_iteration<O: JacobianOperator + ?Sized>(
    op: &mut O,
    cfg: &PowerConfig,
) -> Result<PowerResult> {
    let max_iters = cfg.max_iters.max(1);
    let mut rng = rng::seeded(cfg.seed);
    let mut v = rng::unit_direction(&mut rng, op.dim_x());
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    for it in 1..=max_iters {
        let u = op.vjp(&v)?;
        let w = op.jvp(&u)?;
        let lambda = tensor::dot(&v, &w);
        trace.push(lambda);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(PowerResult {
                lambda_max: 0.0,
                iterations: it,
                converged: true,
                vector: v,
                trace,
            });
        }
        let mut resid = w.clone();
        tensor::axpy(-lambda, &v, &mut resid);
        let eig_ok = norm(&resid) <= cfg.tolerance * lambda.abs();
        let step_ok = prev.is_some_and(|p| (lambda - p).abs() <= cfg.tolerance * lambda.abs());
        v = w.into_iter().map(|x| x / wn).collect();
        if eig_ok || step_ok {
            return Ok(PowerResult {
                lambda_max: lambda,
                iterations: it,
                converged: true,
                vector: v,
                trace,
            });
        }
        prev = Some(lambda);
    }
    let lambda_max = *trace.last().expect("at least one iteration");
    Ok(PowerResult {
        lambda_max,
        iterations: max_iters,
        converged: false,
        vector: v,
        trace,
    })
}

/// Power iteration on the mixed Jacobian of `model` at one sample.
pub fn lambda_max_power_iteration(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    cfg: &PowerConfig,
) -> Result<PowerResult> {
    let mut op = SecondOrder::new(model, params, x, label)?;
    power_iteration(&mut op, cfg)
}

/// `J_a - J_b` for two operators of equal shape.
pub struct DifferenceOperator<'a, A: ?Sized, B: ?Sized> {
    pub a: &'a mut A,
    pub b: &'a mut B,
}

impl<A: JacobianOperator + ?Sized, B: JacobianOperator + ?Sized> JacobianOperator
    for DifferenceOperator<'_, A, B>
{
    fn dim_x(&self) -> usize {
        self.a.dim_x()
    }

    fn dim_theta(&self) -> usize {
        self.a.dim_theta()
    }

    fn jvp(&mut self, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("difference operator", self.a.dim_x(), self.b.dim_x())?;
        Ok(tensor::sub(&self.a.jvp(delta)?, &self.b.jvp(delta)?))
    }

    fn vjp(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(
            "difference operator",
            self.a.dim_theta(),
            self.b.dim_theta(),
        )?;
        Ok(tensor::sub(&self.a.vjp(b)?, &self.b.vjp(b)?))
    }
}
