//! The experiment suite. Every command writes provenance-stamped CSVs into the
//! configured output directory and returns its rows.

mod audit;
mod efficiency;
mod eigen;
mod fairness;
mod init_compare;
mod spectrum;

pub use audit::{run_audit, AuditRow};
pub use efficiency::{run_efficiency, EfficiencyRatio, EfficiencyRun, TraceKind};
pub use eigen::{ladder_indices, run_eigen_defense, EigenRow};
pub use fairness::{class_aggregates, run_fairness, ClassRow, FairnessRow, FairnessSummary};
pub use init_compare::{run_init_compare, InitRow, SchemeSummary};
pub use spectrum::{run_spectrum, SpectrumRow};

use std::path::PathBuf;

use leakcheck_core::attacks::{attack, AttackConfig, AttackStatus};
use leakcheck_core::data::{Cell, Sample};
use leakcheck_core::models::{Model, ParameterSet};

use crate::output::Failure;

/// Rows of one command plus what was written.
#[derive(Debug)]
pub struct Outcome<R> {
    pub rows: Vec<R>,
    pub files: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    pub manifest: Option<PathBuf>,
}

/// Recovery statistics of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSummary {
    pub l2: f64,
    pub rmse: f64,
    /// `||x0 - x*||^2 / d_x`.
    pub mse: f64,
    pub best_loss: f64,
    pub status: String,
    pub recovered: Vec<f64>,
}

impl AttackSummary {
    pub const HEADER: [&'static str; 5] = [
        "attack_l2",
        "attack_rmse",
        "attack_mse",
        "attack_best_loss",
        "attack_status",
    ];

    pub fn cells(&self) -> Vec<Cell> {
        vec![
            self.l2.into(),
            self.rmse.into(),
            self.mse.into(),
            self.best_loss.into(),
            self.status.clone().into(),
        ]
    }
}

pub(crate) fn run_attack(
    model: &Model,
    params: &ParameterSet,
    target: &[f64],
    sample: &Sample,
    cfg: &AttackConfig,
) -> leakcheck_core::Result<AttackSummary> {
    let r = attack(model, params, target, sample.label, cfg)?;
    let err = r.error_against(&sample.x)?;
    let status = match &r.status {
        AttackStatus::Completed => "completed".to_string(),
        AttackStatus::Aborted { iteration, .. } => format!("aborted@{iteration}"),
    };
    Ok(AttackSummary {
        l2: err.l2,
        rmse: err.rmse,
        mse: err.rmse * err.rmse,
        best_loss: r.best_loss,
        status,
        recovered: r.recovered,
    })
}

pub(crate) fn header(fixed: &[&'static str], tail: &[&'static str]) -> Vec<&'static str> {
    fixed.iter().chain(tail).copied().collect()
}
