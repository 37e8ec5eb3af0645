use leakcheck_core::attacks::PerturbationSpec;
use leakcheck_core::data::{Cell, Report};
use leakcheck_core::derivatives::SecondOrder;
use leakcheck_core::metrics::{dense_spectrum_op, i2f_exact_op, i2f_lower_bound_op};
use leakcheck_core::models::{train_model, ParameterSet};
use leakcheck_core::tensor::{add, norm};

use super::{header, run_attack, AttackSummary, Outcome};
use crate::config::{stream, Setup};
use crate::error::Result;
use crate::output::{partition, run_jobs, OutputDir, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub sample: usize,
    pub source: String,
    pub label: usize,
    pub epoch: usize,
    /// Position in the configured perturbation list.
    pub perturbation_index: usize,
    pub perturbation: String,
    /// Noise variance of Gaussian perturbations.
    pub variance: Option<f64>,
    pub delta_norm: f64,
    pub epsilon: f64,
    pub i2f_exact: Option<f64>,
    pub i2f_lower_bound: Option<f64>,
    pub lambda_max: Option<f64>,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub solver_converged: bool,
    pub attack: AttackSummary,
}

/// One row per (epoch, sample, perturbation).
pub fn run_audit(setup: &Setup) -> Result<Outcome<AuditRow>> {
    let cfg = &setup.config;
    let snapshots: Vec<ParameterSet> = match &cfg.train {
        Some(t) => train_model(&setup.model, &setup.params, &setup.training_set, t)?.snapshots,
        None => vec![setup.params.clone()],
    };
    let (n, p) = (setup.samples.len(), cfg.perturbations.len());
    let jobs: Vec<(usize, usize, usize)> = (0..snapshots.len())
        .flat_map(|e| (0..n).flat_map(move |s| (0..p).map(move |k| (e, s, k))))
        .collect();

    let results = run_jobs(&jobs, |job, &(e, s, k)| {
        let sample = &setup.samples[s];
        let params = &snapshots[e];
        let pert = &cfg.perturbations[k];
        let mut op = SecondOrder::new(&setup.model, params, &sample.x, sample.label)?;
        let g0 = op.gradients()?.g_theta;
        let spectrum = match pert {
            PerturbationSpec::SingularDirection { .. } => {
                Some(dense_spectrum_op(&mut op, cfg.solver.dense_budget)?)
            }
            _ => None,
        };
        let delta = pert.realize(
            &g0,
            setup.seed(stream::NOISE, job as u64),
            spectrum.as_ref(),
        )?;
        let exact = i2f_exact_op(&mut op, &delta, &cfg.solver)?;
        let lb = i2f_lower_bound_op(&mut op, &delta, &cfg.solver.power())?;
        let attack = run_attack(
            &setup.model,
            params,
            &add(&g0, &delta),
            sample,
            &setup.attack_config(job as u64),
        )?;
        Ok(AuditRow {
            sample: s,
            source: sample.source.clone(),
            label: sample.label,
            epoch: e,
            perturbation_index: k,
            perturbation: pert.label(),
            variance: match *pert {
                PerturbationSpec::Gaussian { variance } => Some(variance),
                _ => None,
            },
            delta_norm: norm(&delta),
            epsilon: exact.epsilon,
            i2f_exact: exact.exact_value,
            i2f_lower_bound: lb.lower_bound,
            lambda_max: lb.lambda_max,
            solver_iterations: exact.iterations,
            solver_residual: exact.residual,
            solver_converged: exact.converged,
            attack,
        })
    });
    let (rows, failures) = partition(results, |i| {
        let (e, s, k) = jobs[i];
        format!(
            "epoch {e} sample {s} perturbation {}",
            cfg.perturbations[k].label()
        )
    });
    let rows: Vec<AuditRow> = rows.into_iter().map(|(_, r)| r).collect();

    let mut out = OutputDir::create(&cfg.output_dir, Provenance::new("audit", setup))?;
    let mut report = Report::new(&header(
        &[
            "sample",
            "source",
            "label",
            "epoch",
            "perturbation",
            "variance",
            "delta_norm",
            "epsilon",
            "i2f_exact",
            "i2f_lower_bound",
            "lambda_max",
            "solver_iterations",
            "solver_residual",
            "solver_converged",
        ],
        &AttackSummary::HEADER,
    ));
    for r in &rows {
        let mut cells: Vec<Cell> = vec![
            r.sample.into(),
            r.source.clone().into(),
            r.label.into(),
            r.epoch.into(),
            r.perturbation.clone().into(),
            r.variance.into(),
            r.delta_norm.into(),
            r.epsilon.into(),
            r.i2f_exact.into(),
            r.i2f_lower_bound.into(),
            r.lambda_max.into(),
            r.solver_iterations.into(),
            r.solver_residual.into(),
            r.solver_converged.into(),
        ];
        cells.extend(r.attack.cells());
        report.push(cells);
    }
    out.csv("audit.csv", report)?;
    if cfg.dump_images {
        let shape = setup.model.input_shape();
        for (s, sample) in setup.samples.iter().enumerate() {
            out.image(&format!("audit_s{s}_original.pgm"), &sample.x, shape)?;
        }
        for r in &rows {
            let name = format!(
                "audit_e{}_s{}_p{}_recovered.pgm",
                r.epoch, r.sample, r.perturbation_index
            );
            out.image(&name, &r.attack.recovered, shape)?;
        }
    }
    let manifest = out.manifest(&failures)?;
    Ok(Outcome {
        rows,
        files: out.written,
        failures,
        manifest,
    })
}
