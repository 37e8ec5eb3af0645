//! Per-sample stochastic gradient descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::spec::{Model, ParameterSet};
use crate::data::Sample;
use crate::derivatives::SecondOrder;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters before training and after every epoch (`epochs + 1` entries).
    pub snapshots: Vec<ParameterSet>,
    /// Mean training loss of each epoch, measured during the epoch.
    pub epoch_loss: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_params(&self) -> &ParameterSet {
        self.snapshots.last().expect("initial snapshot")
    }
}

/// Trains with one update per sample; the visiting order is reshuffled each
/// epoch from a stream derived from `config.seed`.
pub fn train_model(
    model: &Model,
    init: &ParameterSet,
    data: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be finite and >= 0, got {}",
            config.learning_rate
        )));
    }
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut theta = init.theta().to_vec();
    let mut snapshots = vec![init.clone()];
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut engine = SecondOrder::new(model, init, &data[0].x, data[0].label)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = rng::seeded(rng::derive_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            engine.set_params(&theta)?;
            engine.set_sample(&data[i].x, data[i].label)?;
            let loss = engine.loss().map_err(|_| Error::Diverged { epoch })?;
            let g = engine.gradients().map_err(|_| Error::Diverged { epoch })?;
            total += loss;
            tensor::axpy(-config.learning_rate, &g.g_theta, &mut theta);
            if !theta.iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
        }
        epoch_loss.push(total / data.len() as f64);
        snapshots.push(ParameterSet::new(model, theta.clone())?);
    }
    Ok(TrainOutcome {
        snapshots,
        epoch_loss,
    })
}
