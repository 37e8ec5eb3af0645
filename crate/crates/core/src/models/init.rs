use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{Model, ParameterSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// i.i.d. U(-0.5, 0.5).
    Uniform,
    /// i.i.d. N(0, 0.5), i.e. variance 0.5.
    Normal,
    /// Layerwise U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    Kaiming,
    /// Layerwise U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
    Xavier,
}

impl InitKind {
    pub const ALL: [InitKind; 4] = [
        InitKind::Uniform,
        InitKind::Normal,
        InitKind::Kaiming,
        InitKind::Xavier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::Uniform => "uniform",
            InitKind::Normal => "normal",
            InitKind::Kaiming => "kaiming",
            InitKind::Xavier => "xavier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitScheme {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitScheme {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

pub const NORMAL_INIT_VARIANCE: f64 = 0.5;

/// Draws a parameter vector; a pure function of `(model, scheme)`.
pub fn initialize_parameters(model: &Model, scheme: InitScheme) -> ParameterSet {
    let mut rng = rng::seeded(scheme.seed);
    let mut theta = vec![0.0; model.d_theta()];
    let normal = Normal::new(0.0, NORMAL_INIT_VARIANCE.sqrt()).expect("positive std");
    for slot in model.slots() {
        let values = &mut theta[slot.offset..slot.offset + slot.len()];
        match scheme.kind {
            InitKind::Uniform => values
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.5..0.5)),
            InitKind::Normal => values.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
            InitKind::Kaiming => {
                let bound = (6.0 / slot.fan_in as f64).sqrt();
                values
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
            }
            InitKind::Xavier => {
                let bound = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
                values
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
            }
        }
    }
    ParameterSet::new(model, theta).expect("layout length")
}
