//! JSON experiment configuration and its resolution into a runnable setup.

use std::path::{Path, PathBuf};

use leakcheck_core::attacks::{AttackConfig, AttackKind, PerturbationSpec};
use leakcheck_core::autograd::Activation;
use leakcheck_core::data::{load_idx, synthetic_samples, Dataset, Sample, SyntheticKind};
use leakcheck_core::metrics::SolverConfig;
use leakcheck_core::models::{
    build_model, initialize_parameters, zoo, InitKind, InitScheme, Model, ModelSpec, ParameterSet,
    TrainConfig,
};
use leakcheck_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Stream identifiers mixed into the global seed.
pub(crate) mod stream {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const ATTACK: u64 = 4;
    pub const POWER: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearDot {
        dim: usize,
    },
    LinearClassifier {
        dim: usize,
        classes: usize,
    },
    OneLayer {
        dim: usize,
        activation: Activation,
        #[serde(default)]
        target: f64,
    },
    Mlp {
        dim: usize,
        hidden: Vec<usize>,
        classes: usize,
        activation: Activation,
    },
    Lenet {
        #[serde(default)]
        options: zoo::LeNetOptions,
    },
    Custom {
        spec: ModelSpec,
    },
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        match self {
            ModelConfig::LinearDot { dim } => zoo::linear_dot(*dim),
            ModelConfig::LinearClassifier { dim, classes } => {
                zoo::linear_classifier(*dim, *classes)
            }
            ModelConfig::OneLayer {
                dim,
                activation,
                target,
            } => zoo::one_layer(*dim, *activation, *target),
            ModelConfig::Mlp {
                dim,
                hidden,
                classes,
                activation,
            } => zoo::mlp(*dim, hidden, *classes, *activation),
            ModelConfig::Lenet { options } => zoo::lenet(options),
            ModelConfig::Custom { spec } => spec.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub kind: InitKind,
    /// Defaults to a stream of the global seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            kind: InitKind::Uniform,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        generator: SyntheticKind,
        /// Number of generated samples; defaults to `samples`.
        #[serde(default)]
        size: Option<usize>,
        /// Defaults to the model input shape.
        #[serde(default)]
        shape: Option<Vec<usize>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenDefenseConfig {
    pub directions: usize,
    /// Norm of every singular-direction perturbation.
    pub scale: f64,
}

impl Default for EigenDefenseConfig {
    fn default() -> Self {
        Self {
            directions: 4,
            scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairnessConfig {
    pub variance: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        Self { variance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitCompareConfig {
    pub schemes: Vec<InitKind>,
    pub repetitions: usize,
    pub variance: f64,
    /// Adds the dense-spectrum `E[I^2]` column (one dense Jacobian per row).
    pub expected_risk: bool,
}

impl Default for InitCompareConfig {
    fn default() -> Self {
        Self {
            schemes: InitKind::ALL.to_vec(),
            repetitions: 3,
            variance: 1e-3,
            expected_risk: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencyConfig {
    pub seeds: usize,
    pub learning_rates: Vec<f64>,
    /// Relative change of successive eigenvalue estimates counted as converged.
    pub power_tolerance: f64,
    /// Attack loss relative to its starting value counted as converged.
    pub attack_tolerance: f64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            learning_rates: vec![0.01, 0.03, 0.1, 0.3, 1.0],
            power_tolerance: 1e-6,
            attack_tolerance: 1e-4,
        }
    }
}

fn default_samples() -> usize {
    10
}
fn default_attack() -> AttackConfig {
    AttackConfig::new(AttackKind::Dgl)
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub init: InitConfig,
    pub dataset: DatasetConfig,
    /// Number of samples audited (the first ones of the dataset).
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_attack")]
    pub attack: AttackConfig,
    /// Audits every training epoch when present.
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dump_images: bool,
    #[serde(default)]
    pub eigen_defense: EigenDefenseConfig,
    #[serde(default)]
    pub fairness: FairnessConfig,
    #[serde(default)]
    pub init_compare: InitCompareConfig,
    #[serde(default)]
    pub efficiency: EfficiencyConfig,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub limit: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|source| HarnessError::Parse {
            path: path.into(),
            source,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Makes dataset paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        if let DatasetConfig::Idx { images, labels } = &mut self.dataset {
            for p in [images, labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(limit) = o.limit {
            self.samples = self.samples.min(limit);
        }
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: leakcheck_core::Error| HarnessError::Config(e.to_string());
        if self.samples == 0 {
            return Err(HarnessError::Config("samples must be >= 1".into()));
        }
        for p in &self.perturbations {
            p.validate().map_err(cfg_err)?;
        }
        self.solver.validate().map_err(cfg_err)?;
        self.attack.validate().map_err(cfg_err)?;
        if let Some(t) = &self.train {
            if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "train learning_rate must be >= 0, got {}",
                    t.learning_rate
                )));
            }
        }
        let e = &self.eigen_defense;
        if e.directions == 0 || !(e.scale > 0.0 && e.scale.is_finite()) {
            return Err(HarnessError::Config(
                "eigen_defense needs directions >= 1 and scale > 0".into(),
            ));
        }
        if !(self.fairness.variance >= 0.0 && self.fairness.variance.is_finite()) {
            return Err(HarnessError::Config(
                "fairness variance must be >= 0".into(),
            ));
        }
        let ic = &self.init_compare;
        if ic.schemes.is_empty()
            || ic.repetitions == 0
            || !(ic.variance >= 0.0 && ic.variance.is_finite())
        {
            return Err(HarnessError::Config(
                "init_compare needs schemes, repetitions >= 1 and variance >= 0".into(),
            ));
        }
        let ef = &self.efficiency;
        if ef.seeds == 0
            || ef.learning_rates.is_empty()
            || ef
                .learning_rates
                .iter()
                .any(|lr| !(*lr > 0.0 && lr.is_finite()))
        {
            return Err(HarnessError::Config(
                "efficiency needs seeds >= 1 and positive learning rates".into(),
            ));
        }
        if !(ef.power_tolerance > 0.0 && ef.attack_tolerance > 0.0) {
            return Err(HarnessError::Config(
                "efficiency tolerances must be > 0".into(),
            ));
        }
        if let DatasetConfig::Idx { images, labels } = &self.dataset {
            for p in [images, labels] {
                if !p.is_file() {
                    return Err(HarnessError::Config(format!(
                        "dataset file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn init_scheme(&self) -> InitScheme {
        InitScheme::new(
            self.init.kind,
            self.init
                .seed
                .unwrap_or_else(|| derive_seed(self.seed, stream::INIT)),
        )
    }

    /// Builds the model, draws the parameters and loads the audited samples.
    pub fn prepare(&self) -> Result<Setup> {
        self.validate()?;
        let cfg_err = |e: leakcheck_core::Error| HarnessError::Config(e.to_string());
        let model = build_model(self.model.spec()).map_err(cfg_err)?;
        let dataset = self.load_dataset(&model)?;
        let d: usize = dataset.shape.iter().product();
        if d != model.d_x() {
            return Err(HarnessError::Config(format!(
                "dataset shape {:?} has {d} entries, model expects {}",
                dataset.shape,
                model.d_x()
            )));
        }
        for s in &dataset.samples {
            model.check_label(s.label).map_err(cfg_err)?;
        }
        let params = initialize_parameters(&model, self.init_scheme());
        let all = dataset.samples.clone();
        let samples = dataset.truncated(self.samples).samples;
        Ok(Setup {
            config: self.clone(),
            model,
            params,
            samples,
            training_set: all,
        })
    }

    fn load_dataset(&self, model: &Model) -> Result<Dataset> {
        let cfg_err = |e: leakcheck_core::Error| HarnessError::Config(e.to_string());
        match &self.dataset {
            DatasetConfig::Synthetic {
                generator,
                size,
                shape,
                seed,
            } => {
                let shape = shape
                    .clone()
                    .unwrap_or_else(|| model.input_shape().to_vec());
                let n = size.unwrap_or(self.samples).max(self.samples);
                let seed = seed.unwrap_or_else(|| derive_seed(self.seed, stream::DATA));
                synthetic_samples(generator, n, &shape, seed).map_err(cfg_err)
            }
            DatasetConfig::Idx { images, labels } => {
                let limit = match self.train {
                    Some(_) => None,
                    None => Some(self.samples),
                };
                load_idx(images, labels, limit).map_err(cfg_err)
            }
        }
    }
}

/// A resolved experiment: model, parameters and samples.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub model: Model,
    pub params: ParameterSet,
    /// The audited samples.
    pub samples: Vec<Sample>,
    /// Every loaded sample; the training set in per-epoch mode.
    pub training_set: Vec<Sample>,
}

impl Setup {
    pub fn seed(&self, stream: u64, job: u64) -> u64 {
        derive_seed(derive_seed(self.config.seed, stream), job)
    }

    /// Attack configuration with the per-job seed filled in.
    pub fn attack_config(&self, job: u64) -> AttackConfig {
        let mut cfg = self.config.attack;
        cfg.seed = derive_seed(self.seed(stream::ATTACK, job), cfg.seed);
        cfg
    }
}
