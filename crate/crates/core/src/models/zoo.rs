//! Ready-made model specifications.

use serde::{Deserialize, Serialize};

use super::spec::{Layer, LossKind, ModelSpec};
use crate::autograd::Activation;

/// `L(x, theta) = theta . x` with `d_theta = d_x = d`; its mixed Jacobian is the identity.
pub fn linear_dot(d: usize) -> ModelSpec {
    ModelSpec {
        input_shape: vec![d],
        layers: vec![Layer::Linear {
            in_features: d,
            out_features: 1,
            bias: false,
        }],
        loss: LossKind::Sum,
    }
}

/// Multinomial logistic regression without bias.
pub fn linear_classifier(d: usize, classes: usize) -> ModelSpec {
    ModelSpec {
        input_shape: vec![d],
        layers: vec![Layer::Linear {
            in_features: d,
            out_features: classes,
            bias: false,
        }],
        loss: LossKind::CrossEntropy,
    }
}

/// `L(x, theta) = 0.5 * (act(theta . x) - target)^2`.
pub fn one_layer(d: usize, activation: Activation, target: f64) -> ModelSpec {
    ModelSpec {
        input_shape: vec![d],
        layers: vec![
            Layer::Linear {
                in_features: d,
                out_features: 1,
                bias: false,
            },
            Layer::Activation { kind: activation },
        ],
        loss: LossKind::SquaredError {
            target: vec![target],
        },
    }
}

/// Fully connected network with `activation` after every hidden layer.
pub fn mlp(d: usize, hidden: &[usize], classes: usize, activation: Activation) -> ModelSpec {
    let mut layers = Vec::new();
    let mut width = d;
    for &h in hidden {
        layers.push(Layer::Linear {
            in_features: width,
            out_features: h,
            bias: false,
        });
        layers.push(Layer::Activation { kind: activation });
        width = h;
    }
    layers.push(Layer::Linear {
        in_features: width,
        out_features: classes,
        bias: false,
    });
    ModelSpec {
        input_shape: vec![d],
        layers,
        loss: LossKind::CrossEntropy,
    }
}

/// Options of the four-convolution LeNet variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeNetOptions {
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl Default for LeNetOptions {
    fn default() -> Self {
        Self {
            input_shape: vec![1, 28, 28],
            classes: 10,
            channels: 12,
            kernel: 5,
            stride: 2,
            padding: 2,
            activation: Activation::Sigmoid,
            bias: false,
        }
    }
}

/// Four 5x5 convolutions with 12 channels, each followed by an activation,
/// then a single fully connected layer.
pub fn lenet(opts: &LeNetOptions) -> ModelSpec {
    let mut layers = Vec::new();
    let mut ch = opts.input_shape[0];
    let (mut h, mut w) = (opts.input_shape[1], opts.input_shape[2]);
    for _ in 0..4 {
        layers.push(Layer::Conv2d {
            in_channels: ch,
            out_channels: opts.channels,
            kernel: opts.kernel,
            stride: opts.stride,
            padding: opts.padding,
            bias: opts.bias,
        });
        layers.push(Layer::Activation {
            kind: opts.activation,
        });
        ch = opts.channels;
        h = (h + 2 * opts.padding).saturating_sub(opts.kernel) / opts.stride + 1;
        w = (w + 2 * opts.padding).saturating_sub(opts.kernel) / opts.stride + 1;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Linear {
        in_features: ch * h * w,
        out_features: opts.classes,
        bias: opts.bias,
    });
    ModelSpec {
        input_shape: opts.input_shape.clone(),
        layers,
        loss: LossKind::CrossEntropy,
    }
}
