//! Loss evaluation: a direct evaluator and a graph builder for differentiation.

use crate::autograd::{self, Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::tensor::{self, Tensor};

use super::spec::{Layer, LossKind, Model, ParamRole, ParameterSet};

fn layer_name(model: &Model, i: usize) -> String {
    format!("{i}:{}", model.layers()[i].describe())
}

/// Evaluates `L(x, theta)` directly, without recording a graph.
pub fn forward_loss(model: &Model, params: &ParameterSet, x: &[f64], label: usize) -> Result<f64> {
    params.check(model)?;
    check_len("sample", model.d_x(), x.len())?;
    model.check_label(label)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            layer: "input".into(),
        });
    }
    let mut h = x.to_vec();
    for (i, layer) in model.layers().iter().enumerate() {
        h = match *layer {
            Layer::Linear { bias, .. } => {
                let slot = model.slot(i, ParamRole::Weight).expect("weight slot");
                let w = Tensor::from_parts(slot.shape.clone(), params.slot_values(slot).to_vec());
                let mut y = autograd::mat_vec(&w, &h);
                if bias {
                    let b = params.slot_values(model.slot(i, ParamRole::Bias).expect("bias slot"));
                    tensor::axpy(1.0, b, &mut y);
                }
                y
            }
            Layer::Conv2d { bias, .. } => {
                let g = model.conv_geom(i).expect("conv layer");
                let k = params.slot_values(model.slot(i, ParamRole::Weight).expect("weight slot"));
                let mut y = autograd::conv2d(g, &h, k);
                if bias {
                    let b = params.slot_values(model.slot(i, ParamRole::Bias).expect("bias slot"));
                    let plane = y.len() / b.len();
                    for (chunk, bv) in y.chunks_mut(plane).zip(b) {
                        chunk.iter_mut().for_each(|v| *v += bv);
                    }
                }
                y
            }
            Layer::Activation { kind } => h.into_iter().map(|a| kind.derivative(0, a)).collect(),
            Layer::Flatten => h,
        };
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                layer: layer_name(model, i),
            });
        }
    }
    let loss = match model.loss() {
        LossKind::CrossEntropy => autograd::log_sum_exp(&h) - h[label],
        LossKind::SquaredError { target } => {
            0.5 * h
                .iter()
                .zip(target)
                .map(|(o, t)| (o - t).powi(2))
                .sum::<f64>()
        }
        LossKind::Sum => h.iter().sum(),
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: "loss".into(),
        });
    }
    Ok(loss)
}

/// Handles of the loss graph recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossGraph {
    pub x: Var,
    pub theta: Var,
    /// One-hot label input, present for cross-entropy models.
    pub label: Option<Var>,
    pub loss: Var,
}

pub(crate) fn one_hot(classes: usize, label: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

impl LossGraph {
    /// Records the loss of `model` on `tape` with `x` and `theta` as input leaves.
    pub fn build(
        tape: &mut Tape,
        model: &Model,
        params: &ParameterSet,
        x: &[f64],
        label: usize,
    ) -> Result<Self> {
        params.check(model)?;
        check_len("sample", model.d_x(), x.len())?;
        model.check_label(label)?;
        let xv = tape.input(Tensor::new(model.input_shape().to_vec(), x.to_vec())?);
        let theta = tape.input(Tensor::vector(params.theta().to_vec()));
        let mut h = xv;
        for (i, layer) in model.layers().iter().enumerate() {
            h = match *layer {
                Layer::Linear { bias, .. } => {
                    let slot = model.slot(i, ParamRole::Weight).expect("weight slot");
                    let w = tape.slice(theta, slot.offset, &slot.shape);
                    let y = tape.mat_vec(w, h);
                    if bias {
                        let bs = model.slot(i, ParamRole::Bias).expect("bias slot");
                        let b = tape.slice(theta, bs.offset, &bs.shape);
                        tape.add(y, b)
                    } else {
                        y
                    }
                }
                Layer::Conv2d { bias, .. } => {
                    let g = model.conv_geom(i).expect("conv layer");
                    let slot = model.slot(i, ParamRole::Weight).expect("weight slot");
                    let k = tape.slice(theta, slot.offset, &slot.shape);
                    let y = tape.conv2d(h, k, g);
                    if bias {
                        let bs = model.slot(i, ParamRole::Bias).expect("bias slot");
                        let b = tape.slice(theta, bs.offset, &bs.shape);
                        tape.add_channel_bias(y, b)
                    } else {
                        y
                    }
                }
                Layer::Activation { kind } => tape.activation(h, kind),
                Layer::Flatten => {
                    let n = tape.value(h).len();
                    tape.reshape(h, &[n])
                }
            };
        }
        let (loss, label_var) = match model.loss() {
            LossKind::CrossEntropy => {
                let classes = model.num_classes().expect("classifier");
                let y = tape.input(Tensor::vector(one_hot(classes, label)));
                let lse = tape.log_sum_exp(h);
                let picked = tape.dot(h, y);
                (tape.sub(lse, picked), Some(y))
            }
            LossKind::SquaredError { target } => {
                let t = tape.constant(Tensor::new(tape.shape(h).to_vec(), target.clone())?);
                let d = tape.sub(h, t);
                let sq = tape.dot(d, d);
                (tape.scale(sq, 0.5), None)
            }
            LossKind::Sum => {
                let ones = tape.constant(Tensor::filled(tape.shape(h), 1.0));
                (tape.dot(h, ones), None)
            }
        };
        Ok(Self {
            x: xv,
            theta,
            label: label_var,
            loss,
        })
    }

    /// Overwrites the label input (no-op for losses without labels).
    pub fn set_label(&self, tape: &mut Tape, model: &Model, label: usize) -> Result<()> {
        model.check_label(label)?;
        if let (Some(var), Some(c)) = (self.label, model.num_classes()) {
            tape.set_input(var, &one_hot(c, label));
        }
        Ok(())
    }
}
