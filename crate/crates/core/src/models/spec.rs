use serde::{Deserialize, Serialize};

use crate::autograd::{Activation, ConvGeom};
use crate::error::{Error, Result};

/// One layer of a sequential model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    Linear {
        in_features: usize,
        out_features: usize,
        #[serde(default)]
        bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default)]
        bias: bool,
    },
    Activation {
        kind: Activation,
    },
    Flatten,
}

fn one() -> usize {
    1
}

impl Layer {
    pub fn describe(&self) -> String {
        match self {
            Layer::Linear {
                in_features,
                out_features,
                ..
            } => format!("linear({in_features},{out_features})"),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                format!("conv2d({in_channels},{out_channels},k{kernel},s{stride},p{padding})")
            }
            Layer::Activation { kind } => kind.name().to_string(),
            Layer::Flatten => "flatten".to_string(),
        }
    }
}

/// Scalar loss applied to the network output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    /// Softmax cross-entropy against a one-hot label.
    CrossEntropy,
    /// `0.5 * ||output - target||^2`.
    SquaredError { target: Vec<f64> },
    /// Sum of the outputs. A single-output linear layer gives `L = theta . x`.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub loss: LossKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// Location of one parameter tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub role: ParamRole,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A shape-checked [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    slots: Vec<ParamSlot>,
    /// Output shape of every layer.
    shapes: Vec<Vec<usize>>,
    d_x: usize,
    d_theta: usize,
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.spec.layers
    }

    pub fn loss(&self) -> &LossKind {
        &self.spec.loss
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes
            .last()
            .map_or(&self.spec.input_shape, |s| s.as_slice())
    }

    /// Output shape of layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.spec.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slot(&self, layer: usize, role: ParamRole) -> Option<&ParamSlot> {
        self.slots
            .iter()
            .find(|s| s.layer == layer && s.role == role)
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_theta(&self) -> usize {
        self.d_theta
    }

    /// Number of classes for cross-entropy models.
    pub fn num_classes(&self) -> Option<usize> {
        match self.spec.loss {
            LossKind::CrossEntropy => Some(self.output_shape().iter().product()),
            _ => None,
        }
    }

    pub(crate) fn conv_geom(&self, i: usize) -> Option<ConvGeom> {
        match self.spec.layers[i] {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let s = self.layer_input_shape(i);
                Some(ConvGeom {
                    in_ch: in_channels,
                    in_h: s[1],
                    in_w: s[2],
                    out_ch: out_channels,
                    kernel,
                    stride,
                    padding,
                })
            }
            _ => None,
        }
    }

    pub fn check_label(&self, label: usize) -> Result<()> {
        if let Some(c) = self.num_classes() {
            if label >= c {
                return Err(Error::Label { label, classes: c });
            }
        }
        Ok(())
    }
}

/// Validates layer composition and lays out the flat parameter vector.
pub fn build_model(spec: ModelSpec) -> Result<Model> {
    if spec.input_shape.is_empty() || spec.input_shape.contains(&0) {
        return Err(Error::Config(format!(
            "input shape {:?} must be non-empty and positive",
            spec.input_shape
        )));
    }
    let mut shape = spec.input_shape.clone();
    let mut shapes = Vec::with_capacity(spec.layers.len());
    let mut slots = Vec::new();
    let mut offset = 0usize;
    let mut prev = "input".to_string();

    let mismatch = |prev: &str, layer: &Layer, reason: String| Error::LayerMismatch {
        first: prev.to_string(),
        second: layer.describe(),
        reason,
    };

    for (i, layer) in spec.layers.iter().enumerate() {
        match *layer {
            Layer::Linear {
                in_features,
                out_features,
                bias,
            } => {
                if shape.len() != 1 || shape[0] != in_features {
                    return Err(mismatch(
                        &prev,
                        layer,
                        format!("expects a vector of length {in_features}, got shape {shape:?}"),
                    ));
                }
                if out_features == 0 {
                    return Err(mismatch(
                        &prev,
                        layer,
                        "out_features must be positive".into(),
                    ));
                }
                slots.push(ParamSlot {
                    layer: i,
                    role: ParamRole::Weight,
                    offset,
                    shape: vec![out_features, in_features],
                    fan_in: in_features,
                    fan_out: out_features,
                });
                offset += out_features * in_features;
                if bias {
                    slots.push(ParamSlot {
                        layer: i,
                        role: ParamRole::Bias,
                        offset,
                        shape: vec![out_features],
                        fan_in: in_features,
                        fan_out: out_features,
                    });
                    offset += out_features;
                }
                shape = vec![out_features];
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
            } => {
                if shape.len() != 3 || shape[0] != in_channels {
                    return Err(mismatch(
                        &prev,
                        layer,
                        format!("expects [{in_channels}, h, w] input, got shape {shape:?}"),
                    ));
                }
                if out_channels == 0 {
                    return Err(mismatch(
                        &prev,
                        layer,
                        "out_channels must be positive".into(),
                    ));
                }
                let geom = ConvGeom {
                    in_ch: in_channels,
                    in_h: shape[1],
                    in_w: shape[2],
                    out_ch: out_channels,
                    kernel,
                    stride,
                    padding,
                };
                let Some((oh, ow)) = geom.output_hw() else {
                    return Err(mismatch(
                        &prev,
                        layer,
                        format!("kernel does not fit input {shape:?}"),
                    ));
                };
                let kk = kernel * kernel;
                slots.push(ParamSlot {
                    layer: i,
                    role: ParamRole::Weight,
                    offset,
                    shape: vec![out_channels, in_channels, kernel, kernel],
                    fan_in: in_channels * kk,
                    fan_out: out_channels * kk,
                });
                offset += out_channels * in_channels * kk;
                if bias {
                    slots.push(ParamSlot {
                        layer: i,
                        role: ParamRole::Bias,
                        offset,
                        shape: vec![out_channels],
                        fan_in: in_channels * kk,
                        fan_out: out_channels * kk,
                    });
                    offset += out_channels;
                }
                shape = vec![out_channels, oh, ow];
            }
            Layer::Activation { .. } => {}
            Layer::Flatten => shape = vec![shape.iter().product()],
        }
        shapes.push(shape.clone());
        prev = layer.describe();
    }

    let out_len: usize = shape.iter().product();
    match &spec.loss {
        LossKind::CrossEntropy => {
            if shape.len() != 1 || out_len < 2 {
                return Err(Error::LayerMismatch {
                    first: prev,
                    second: "cross_entropy".into(),
                    reason: format!(
                        "needs a logit vector with at least 2 classes, got shape {shape:?}"
                    ),
                });
            }
        }
        LossKind::SquaredError { target } => {
            if target.len() != out_len {
                return Err(Error::LayerMismatch {
                    first: prev,
                    second: "squared_error".into(),
                    reason: format!("target has {} entries, output has {out_len}", target.len()),
                });
            }
        }
        LossKind::Sum => {}
    }
    if offset == 0 {
        return Err(Error::Config("model has no parameters".into()));
    }

    let d_x = spec.input_shape.iter().product();
    Ok(Model {
        spec,
        slots,
        shapes,
        d_x,
        d_theta: offset,
    })
}

/// Flat parameter vector plus the layout it follows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    theta: Vec<f64>,
    slots: Vec<ParamSlot>,
}

impl ParameterSet {
    pub fn new(model: &Model, theta: Vec<f64>) -> Result<Self> {
        crate::error::check_len("parameter vector", model.d_theta(), theta.len())?;
        Ok(Self {
            theta,
            slots: model.slots().to_vec(),
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    /// Values of one parameter slot.
    pub fn slot_values(&self, slot: &ParamSlot) -> &[f64] {
        &self.theta[slot.offset..slot.offset + slot.len()]
    }

    pub(crate) fn check(&self, model: &Model) -> Result<()> {
        crate::error::check_len("parameter vector", model.d_theta(), self.theta.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_parameter_count() {
        let m = build_model(ModelSpec {
            input_shape: vec![784],
            layers: vec![Layer::Linear {
                in_features: 784,
                out_features: 10,
                bias: false,
            }],
            loss: LossKind::CrossEntropy,
        })
        .unwrap();
        assert_eq!(m.d_theta(), 7840);
        assert_eq!(m.d_x(), 784);
    }

    #[test]
    fn mismatched_layers_are_named() {
        let err = build_model(ModelSpec {
            input_shape: vec![4],
            layers: vec![
                Layer::Linear {
                    in_features: 4,
                    out_features: 3,
                    bias: false,
                },
                Layer::Linear {
                    in_features: 5,
                    out_features: 2,
                    bias: false,
                },
            ],
            loss: LossKind::CrossEntropy,
        })
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("linear(4,3)") && msg.contains("linear(5,2)"),
            "{msg}"
        );
    }

    #[test]
    fn conv_requires_image_input() {
        let err = build_model(ModelSpec {
            input_shape: vec![16],
            layers: vec![Layer::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 0,
                bias: false,
            }],
            loss: LossKind::Sum,
        })
        .unwrap_err();
        assert!(matches!(err, Error::LayerMismatch { .. }));
    }

    #[test]
    fn squared_error_target_must_match_output() {
        let err = build_model(ModelSpec {
            input_shape: vec![2],
            layers: vec![Layer::Linear {
                in_features: 2,
                out_features: 1,
                bias: false,
            }],
            loss: LossKind::SquaredError {
                target: vec![0.0, 1.0],
            },
        })
        .unwrap_err();
        assert!(err.to_string().contains("squared_error"));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec {
            input_shape: vec![1, 8, 8],
            layers: vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                    bias: true,
                },
                Layer::Activation {
                    kind: Activation::Sigmoid,
                },
                Layer::Flatten,
                Layer::Linear {
                    in_features: 32,
                    out_features: 3,
                    bias: false,
                },
            ],
            loss: LossKind::CrossEntropy,
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<ModelSpec>(
            r#"{"input_shape":[2],"layers":[],"loss":{"type":"sum"},"extra":1}"#
        )
        .is_err());
    }
}
