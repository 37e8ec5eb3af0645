//! First and mixed second derivatives of a model loss.
//!
//! `J = d/dx d/dtheta L` has shape `d_x x d_theta`. It is never formed
//! unless [`materialize_jacobian`] is called; [`SecondOrder`] provides the
//! products `J delta` and `J^T b` by reverse-over-reverse differentiation.

use nalgebra::DMatrix;

use crate::autograd::{Plan, Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::models::{forward_loss, LossGraph, Model, ParameterSet};
use crate::tensor::Tensor;

/// Matrix-free access to a mixed Jacobian.
pub trait JacobianOperator {
    fn dim_x(&self) -> usize;
    fn dim_theta(&self) -> usize;
    /// `J delta` for `delta` of length `dim_theta`.
    fn jvp(&mut self, delta: &[f64]) -> Result<Vec<f64>>;
    /// `J^T b` for `b` of length `dim_x`.
    fn vjp(&mut self, b: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub g_theta: Vec<f64>,
    pub g_x: Vec<f64>,
}

/// Second-order derivative engine for one model at one `(x, y, theta)`.
///
/// The graph is recorded once; changing the sample or the parameters only
/// invalidates the nodes that depend on them.
#[derive(Debug)]
pub struct SecondOrder<'m> {
    model: &'m Model,
    tape: Tape,
    graph: LossGraph,
    g_theta: Var,
    g_x: Var,
    delta: Var,
    b: Var,
    jvp: Var,
    vjp: Var,
    loss_plan: Plan,
    grad_plan: Plan,
    jvp_plan: Plan,
    vjp_plan: Plan,
    jvp_calls: usize,
    vjp_calls: usize,
}

impl<'m> SecondOrder<'m> {
    pub fn new(model: &'m Model, params: &ParameterSet, x: &[f64], label: usize) -> Result<Self> {
        forward_loss(model, params, x, label)?;
        let mut tape = Tape::new();
        let graph = LossGraph::build(&mut tape, model, params, x, label)?;
        let grads = tape.grad(graph.loss, &[graph.theta, graph.x]);
        let (g_theta, g_x) = (grads[0], grads[1]);

        let delta = tape.input(Tensor::zeros(&[model.d_theta()]));
        let s1 = tape.dot(g_theta, delta);
        let jvp = tape.grad(s1, &[graph.x])[0];

        let b = tape.input(Tensor::zeros(model.input_shape()));
        let s2 = tape.dot(g_x, b);
        let vjp = tape.grad(s2, &[graph.theta])[0];

        Ok(Self {
            model,
            loss_plan: tape.plan(&[graph.loss]),
            grad_plan: tape.plan(&[g_theta, g_x]),
            jvp_plan: tape.plan(&[jvp]),
            vjp_plan: tape.plan(&[vjp]),
            tape,
            graph,
            g_theta,
            g_x,
            delta,
            b,
            jvp,
            vjp,
            jvp_calls: 0,
            vjp_calls: 0,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Moves the operator to a new sample.
    pub fn set_sample(&mut self, x: &[f64], label: usize) -> Result<()> {
        check_len("sample", self.model.d_x(), x.len())?;
        self.graph.set_label(&mut self.tape, self.model, label)?;
        self.tape.set_input(self.graph.x, x);
        Ok(())
    }

    /// Moves the operator to new parameters.
    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        check_len("parameter vector", self.model.d_theta(), theta.len())?;
        self.tape.set_input(self.graph.theta, theta);
        Ok(())
    }

    pub fn loss(&mut self) -> Result<f64> {
        self.tape.run(&self.loss_plan);
        let v = self.tape.value(self.graph.loss).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                layer: "loss".into(),
            })
        }
    }

    pub fn gradients(&mut self) -> Result<GradientBundle> {
        self.tape.run(&self.grad_plan);
        let g_theta = finite(self.tape.value(self.g_theta), "gradient wrt theta")?;
        let g_x = finite(self.tape.value(self.g_x), "gradient wrt x")?;
        Ok(GradientBundle { g_theta, g_x })
    }

    /// Number of `J delta` and `J^T b` evaluations so far.
    pub fn product_counts(&self) -> (usize, usize) {
        (self.jvp_calls, self.vjp_calls)
    }
}

fn finite(t: &Tensor, what: &str) -> Result<Vec<f64>> {
    if t.is_finite() {
        Ok(t.data().to_vec())
    } else {
        Err(Error::NonFinite {
            layer: what.to_string(),
        })
    }
}

impl JacobianOperator for SecondOrder<'_> {
    fn dim_x(&self) -> usize {
        self.model.d_x()
    }

    fn dim_theta(&self) -> usize {
        self.model.d_theta()
    }

    fn jvp(&mut self, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("delta", self.model.d_theta(), delta.len())?;
        self.tape.set_input(self.delta, delta);
        self.tape.run(&self.jvp_plan);
        self.jvp_calls += 1;
        finite(self.tape.value(self.jvp), "jacobian-vector product")
    }

    fn vjp(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("b", self.model.d_x(), b.len())?;
        self.tape.set_input(self.b, b);
        self.tape.run(&self.vjp_plan);
        self.vjp_calls += 1;
        finite(self.tape.value(self.vjp), "vector-jacobian product")
    }
}

/// An explicitly stored Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub j: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(j: DMatrix<f64>) -> Self {
        Self { j }
    }

    /// Builds from row-major data of shape `rows x cols`.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self {
            j: DMatrix::from_row_slice(rows, cols, data),
        }
    }
}

impl JacobianOperator for DenseOperator {
    fn dim_x(&self) -> usize {
        self.j.nrows()
    }

    fn dim_theta(&self) -> usize {
        self.j.ncols()
    }

    fn jvp(&mut self, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("delta", self.j.ncols(), delta.len())?;
        Ok((&self.j * nalgebra::DVector::from_column_slice(delta))
            .as_slice()
            .to_vec())
    }

    fn vjp(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("b", self.j.nrows(), b.len())?;
        Ok((self.j.tr_mul(&nalgebra::DVector::from_column_slice(b)))
            .as_slice()
            .to_vec())
    }
}

/// `(nabla_theta L, nabla_x L)` at one point.
pub fn gradients(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
) -> Result<GradientBundle> {
    let mut tape = Tape::new();
    let graph = LossGraph::build(&mut tape, model, params, x, label)?;
    let g = tape.grad(graph.loss, &[graph.theta, graph.x]);
    Ok(GradientBundle {
        g_theta: finite(tape.value(g[0]), "gradient wrt theta")?,
        g_x: finite(tape.value(g[1]), "gradient wrt x")?,
    })
}

/// `J delta`, where `J` is the mixed Jacobian at `(x, y, theta)`.
pub fn mixed_jvp(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    delta: &[f64],
) -> Result<Vec<f64>> {
    SecondOrder::new(model, params, x, label)?.jvp(delta)
}

/// `J^T b`.
pub fn mixed_vjp(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    b: &[f64],
) -> Result<Vec<f64>> {
    SecondOrder::new(model, params, x, label)?.vjp(b)
}

pub const DEFAULT_MATERIALIZE_BUDGET: usize = 10_000_000;

/// Forms `J` explicitly with `min(d_x, d_theta)` products.
pub fn materialize_jacobian<O: JacobianOperator + ?Sized>(
    op: &mut O,
    budget: usize,
) -> Result<DMatrix<f64>> {
    let (dx, dt) = (op.dim_x(), op.dim_theta());
    let required = dx.saturating_mul(dt);
    if required > budget {
        return Err(Error::Budget { required, budget });
    }
    let mut j = DMatrix::zeros(dx, dt);
    if dx <= dt {
        let mut e = vec![0.0; dx];
        for i in 0..dx {
            e[i] = 1.0;
            let row = op.vjp(&e)?;
            e[i] = 0.0;
            for (k, v) in row.into_iter().enumerate() {
                j[(i, k)] = v;
            }
        }
    } else {
        let mut e = vec![0.0; dt];
        for k in 0..dt {
            e[k] = 1.0;
            let col = op.jvp(&e)?;
            e[k] = 0.0;
            j.set_column(k, &nalgebra::DVector::from_vec(col));
        }
    }
    Ok(j)
}

/// Quantity approximated by [`finite_difference_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub enum FdTarget {
    GradTheta,
    GradX,
    /// `J delta` through a mixed second difference of the loss.
    Jvp(Vec<f64>),
}

impl FdTarget {
    pub fn default_step(&self) -> f64 {
        match self {
            FdTarget::GradTheta | FdTarget::GradX => 1e-3,
            FdTarget::Jvp(_) => 1e-2,
        }
    }
}

/// Central finite differences of the loss with one Richardson extrapolation
/// step (`(4 D(h/2) - D(h)) / 3`), using only forward evaluations.
pub fn finite_difference_oracle(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    target: &FdTarget,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let coarse = central_difference(model, params, x, label, target, step)?;
    let fine = central_difference(model, params, x, label, target, step / 2.0)?;
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect())
}

fn central_difference(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    target: &FdTarget,
    h: f64,
) -> Result<Vec<f64>> {
    let loss_at = |theta: &[f64], xs: &[f64]| -> Result<f64> {
        let p = ParameterSet::new(model, theta.to_vec())?;
        forward_loss(model, &p, xs, label)
    };
    let theta = params.theta();
    match target {
        FdTarget::GradTheta => {
            let mut t = theta.to_vec();
            (0..t.len())
                .map(|k| {
                    let orig = t[k];
                    t[k] = orig + h;
                    let up = loss_at(&t, x)?;
                    t[k] = orig - h;
                    let down = loss_at(&t, x)?;
                    t[k] = orig;
                    Ok((up - down) / (2.0 * h))
                })
                .collect()
        }
        FdTarget::GradX => {
            let mut xs = x.to_vec();
            (0..xs.len())
                .map(|i| {
                    let orig = xs[i];
                    xs[i] = orig + h;
                    let up = loss_at(theta, &xs)?;
                    xs[i] = orig - h;
                    let down = loss_at(theta, &xs)?;
                    xs[i] = orig;
                    Ok((up - down) / (2.0 * h))
                })
                .collect()
        }
        FdTarget::Jvp(delta) => {
            check_len("delta", theta.len(), delta.len())?;
            // Step along the unit direction and rescale, so the truncation
            // error does not grow with ||delta||.
            let dn = crate::tensor::norm(delta);
            if dn == 0.0 {
                return Ok(vec![0.0; x.len()]);
            }
            let plus: Vec<f64> = theta
                .iter()
                .zip(delta)
                .map(|(t, d)| t + h * d / dn)
                .collect();
            let minus: Vec<f64> = theta
                .iter()
                .zip(delta)
                .map(|(t, d)| t - h * d / dn)
                .collect();
            let mut xs = x.to_vec();
            (0..xs.len())
                .map(|i| {
                    let orig = xs[i];
                    xs[i] = orig + h;
                    let pp = loss_at(&plus, &xs)?;
                    let pm = loss_at(&minus, &xs)?;
                    xs[i] = orig - h;
                    let mp = loss_at(&plus, &xs)?;
                    let mm = loss_at(&minus, &xs)?;
                    xs[i] = orig;
                    Ok(dn * (pp - pm - mp + mm) / (4.0 * h * h))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, zoo};

    #[test]
    fn dense_operator_products() {
        let mut op = DenseOperator::from_rows(2, 2, &[4.0, 0.0, 1.0, 2.0]);
        assert_eq!(op.jvp(&[1.0, 1.0]).unwrap(), vec![4.0, 3.0]);
        assert_eq!(op.vjp(&[1.0, 1.0]).unwrap(), vec![5.0, 2.0]);
        assert!(op.jvp(&[1.0]).is_err());
    }

    #[test]
    fn linear_dot_jacobian_is_identity() {
        let model = build_model(zoo::linear_dot(4)).unwrap();
        let params = ParameterSet::new(&model, vec![0.3, -0.2, 0.1, 0.9]).unwrap();
        let mut op = SecondOrder::new(&model, &params, &[1.0, 2.0, 3.0, 4.0], 0).unwrap();
        let j = materialize_jacobian(&mut op, DEFAULT_MATERIALIZE_BUDGET).unwrap();
        assert_eq!(j, DMatrix::identity(4, 4));
        let g = op.gradients().unwrap();
        assert_eq!(g.g_theta, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.g_x, vec![0.3, -0.2, 0.1, 0.9]);
    }

    #[test]
    fn budget_is_enforced() {
        let mut op = DenseOperator::from_rows(2, 3, &[0.0; 6]);
        assert!(matches!(
            materialize_jacobian(&mut op, 5),
            Err(Error::Budget {
                required: 6,
                budget: 5
            })
        ));
    }
}
