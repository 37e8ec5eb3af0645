use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::power::{power_iteration, PowerConfig};
use crate::derivatives::{
    materialize_jacobian, JacobianOperator, SecondOrder, DEFAULT_MATERIALIZE_BUDGET,
};
use crate::error::{check_len, Error, Result};
use crate::models::{Model, ParameterSet};
use crate::tensor::{self, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    GradientDescent,
    ConjugateGradient,
    Neumann,
    Dense,
}

impl SolverMode {
    pub const ALL: [SolverMode; 4] = [
        SolverMode::GradientDescent,
        SolverMode::ConjugateGradient,
        SolverMode::Neumann,
        SolverMode::Dense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverMode::GradientDescent => "gradient_descent",
            SolverMode::ConjugateGradient => "conjugate_gradient",
            SolverMode::Neumann => "neumann",
            SolverMode::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Damping added to `J J^T`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Target for the relative residual `||(JJ^T + eps I) b - J delta|| / ||J delta||`.
    pub tolerance: f64,
    /// Gradient-descent step; defaults to `1 / (lambda_max + epsilon)`.
    pub step_size: Option<f64>,
    pub seed: u64,
    pub power_iters: usize,
    pub power_tolerance: f64,
    /// Entry budget for the dense mode.
    pub dense_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::ConjugateGradient,
            epsilon: 1.0,
            max_iters: 2000,
            tolerance: 1e-10,
            step_size: None,
            seed: 0,
            power_iters: 200,
            power_tolerance: 1e-10,
            dense_budget: DEFAULT_MATERIALIZE_BUDGET,
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mode: SolverMode, epsilon: f64) -> Self {
        Self {
            mode,
            epsilon,
            ..Self::default()
        }
    }

    pub fn power(&self) -> PowerConfig {
        PowerConfig {
            max_iters: self.power_iters,
            tolerance: self.power_tolerance,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "solver tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("solver max_iters must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("step size must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct I2FReport {
    /// `||(J J^T + eps I)^{-1} J delta||`.
    pub exact_value: Option<f64>,
    /// `||J delta|| / lambda_max(J J^T)`.
    pub lower_bound: Option<f64>,
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual of the returned solution.
    pub residual: f64,
    pub lambda_max: Option<f64>,
    pub converged: bool,
    pub epsilon: f64,
    pub mode: Option<SolverMode>,
    pub jdelta_norm: f64,
}

struct Normal<'a, O: ?Sized> {
    op: &'a mut O,
    eps: f64,
}

impl<O: JacobianOperator + ?Sized> Normal<'_, O> {
    /// `(J J^T + eps I) v`.
    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let u = self.op.vjp(v)?;
        let mut w = self.op.jvp(&u)?;
        tensor::axpy(self.eps, v, &mut w);
        Ok(w)
    }
}

/// Damped inversion influence with matrix-free (or dense) solvers.
pub fn i2f_exact_op<O: JacobianOperator + ?Sized>(
    op: &mut O,
    delta: &[f64],
    cfg: &SolverConfig,
) -> Result<I2FReport> {
    cfg.validate()?;
    check_len("delta", op.dim_theta(), delta.len())?;
    let jd = op.jvp(delta)?;
    let jd_norm = norm(&jd);
    let eps = cfg.epsilon;
    let mut report = I2FReport {
        exact_value: Some(0.0),
        lower_bound: None,
        solution: vec![0.0; jd.len()],
        iterations: 0,
        residual: 0.0,
        lambda_max: None,
        converged: true,
        epsilon: eps,
        mode: Some(cfg.mode),
        jdelta_norm: jd_norm,
    };
    if jd_norm == 0.0 {
        return Ok(report);
    }
    let tol = cfg.tolerance;
    match cfg.mode {
        SolverMode::ConjugateGradient => {
            let mut a = Normal { op, eps };
            let mut b = vec![0.0; jd.len()];
            let mut r = jd.clone();
            let mut p = r.clone();
            let mut rr = tensor::dot(&r, &r);
            let mut it = 0;
            let mut converged = false;
            while it < cfg.max_iters {
                if rr.sqrt() <= tol * jd_norm {
                    converged = true;
                    break;
                }
                let ap = a.apply(&p)?;
                let pap = tensor::dot(&p, &ap);
                it += 1;
                if !(pap > 0.0) {
                    break;
                }
                let alpha = rr / pap;
                tensor::axpy(alpha, &p, &mut b);
                tensor::axpy(-alpha, &ap, &mut r);
                let rr_new = tensor::dot(&r, &r);
                let beta = rr_new / rr;
                rr = rr_new;
                p = r.iter().zip(&p).map(|(ri, pi)| ri + beta * pi).collect();
            }
            let true_r = tensor::sub(&a.apply(&b)?, &jd);
            report.residual = norm(&true_r) / jd_norm;
            report.converged = converged || report.residual <= tol;
            report.iterations = it;
            report.solution = b;
        }
        SolverMode::GradientDescent | SolverMode::Neumann => {
            let pr = power_iteration(op, &cfg.power())?;
            let lmax = pr.lambda_max;
            report.lambda_max = Some(lmax);
            let scale = lmax + eps;
            if !(scale > 0.0) {
                return Err(Error::ZeroDenominator("step size 1/(lambda_max + epsilon)"));
            }
            let mut a = Normal { op, eps };
            if cfg.mode == SolverMode::GradientDescent {
                let eta = cfg.step_size.unwrap_or(1.0 / scale);
                let mut b = vec![0.0; jd.len()];
                let mut it = 0;
                let mut g = tensor::scale(&jd, -1.0);
                loop {
                    report.residual = norm(&g) / jd_norm;
                    if report.residual <= tol || it == cfg.max_iters || !report.residual.is_finite()
                    {
                        break;
                    }
                    tensor::axpy(-eta, &g, &mut b);
                    g = tensor::sub(&a.apply(&b)?, &jd);
                    it += 1;
                }
                report.converged = report.residual <= tol;
                report.iterations = it;
                report.solution = b;
            } else {
                // Series sum_k (I - A/c)^k (J delta / c); the residual of a
                // partial sum is -c times the first omitted term.
                let mut term = tensor::scale(&jd, 1.0 / scale);
                let mut s = term.clone();
                let mut it = 0;
                loop {
                    let next = tensor::sub(&term, &tensor::scale(&a.apply(&term)?, 1.0 / scale));
                    it += 1;
                    report.residual = scale * norm(&next) / jd_norm;
                    if report.residual <= tol || it == cfg.max_iters || !report.residual.is_finite()
                    {
                        break;
                    }
                    tensor::axpy(1.0, &next, &mut s);
                    term = next;
                }
                report.converged = report.residual <= tol;
                report.iterations = it;
                report.solution = s;
            }
        }
        SolverMode::Dense => {
            let j = materialize_jacobian(op, cfg.dense_budget)?;
            let b = dense_solve(&j, &jd, eps)?;
            let mut a = Normal { op, eps };
            let true_r = tensor::sub(&a.apply(&b)?, &jd);
            report.residual = norm(&true_r) / jd_norm;
            report.converged = report.residual <= tol.max(1e-8);
            report.iterations = 1;
            report.solution = b;
        }
    }
    report.exact_value = Some(norm(&report.solution));
    Ok(report)
}

fn dense_solve(j: &DMatrix<f64>, jd: &[f64], eps: f64) -> Result<Vec<f64>> {
    let mut a = j * j.transpose();
    for i in 0..a.nrows() {
        a[(i, i)] += eps;
    }
    let rhs = DVector::from_column_slice(jd);
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&rhs).as_slice().to_vec());
    }
    a.lu()
        .solve(&rhs)
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| Error::Singular(format!("J J^T + {eps} I is singular")))
}

/// `||J delta|| / lambda_max(J J^T)` with `lambda_max` from power iteration.
pub fn i2f_lower_bound_op<O: JacobianOperator + ?Sized>(
    op: &mut O,
    delta: &[f64],
    power: &PowerConfig,
) -> Result<I2FReport> {
    check_len("delta", op.dim_theta(), delta.len())?;
    let jd = op.jvp(delta)?;
    let jd_norm = norm(&jd);
    let pr = power_iteration(op, power)?;
    let lower = if jd_norm == 0.0 {
        0.0
    } else if pr.lambda_max > 0.0 {
        jd_norm / pr.lambda_max
    } else {
        return Err(Error::ZeroDenominator("lambda_max of J J^T"));
    };
    Ok(I2FReport {
        exact_value: None,
        lower_bound: Some(lower),
        solution: Vec::new(),
        iterations: pr.iterations,
        residual: 0.0,
        lambda_max: Some(pr.lambda_max),
        converged: pr.converged,
        epsilon: 0.0,
        mode: None,
        jdelta_norm: jd_norm,
    })
}

pub fn i2f_exact(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    delta: &[f64],
    cfg: &SolverConfig,
) -> Result<I2FReport> {
    let mut op = SecondOrder::new(model, params, x, label)?;
    i2f_exact_op(&mut op, delta, cfg)
}

pub fn i2f_lower_bound(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    delta: &[f64],
    power: &PowerConfig,
) -> Result<I2FReport> {
    let mut op = SecondOrder::new(model, params, x, label)?;
    i2f_lower_bound_op(&mut op, delta, power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivatives::DenseOperator;

    #[test]
    fn all_modes_on_two_by_two() {
        for mode in SolverMode::ALL {
            let mut op = DenseOperator::from_rows(2, 2, &[4.0, 0.0, 1.0, 2.0]);
            let cfg = SolverConfig {
                max_iters: 20_000,
                ..SolverConfig::with_mode(mode, 0.0)
            };
            let r = i2f_exact_op(&mut op, &[1.0, 0.0], &cfg).unwrap();
            assert!(r.converged, "{mode:?}");
            assert!(
                (r.exact_value.unwrap() - 0.25).abs() < 1e-8,
                "{mode:?}: {r:?}"
            );
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut op = DenseOperator::from_rows(2, 2, &[4.0, 0.0, 1.0, 2.0]);
        let cfg = SolverConfig {
            max_iters: 2,
            ..SolverConfig::with_mode(SolverMode::GradientDescent, 0.0)
        };
        let r = i2f_exact_op(&mut op, &[1.0, 0.0], &cfg).unwrap();
        assert!(!r.converged);
        assert!(r.residual > cfg.tolerance);
    }
}
