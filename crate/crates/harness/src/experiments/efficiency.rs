use std::time::Instant;

use leakcheck_core::attacks::attack;
use leakcheck_core::data::{Cell, Report};
use leakcheck_core::derivatives::SecondOrder;
use leakcheck_core::metrics::{power_iteration, PowerConfig};

use super::Outcome;
use crate::config::{stream, Setup};
use crate::error::Result;
use crate::output::{partition, run_jobs, OutputDir, Provenance};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Power,
    Attack,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Power => "power",
            TraceKind::Attack => "attack",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRun {
    pub kind: TraceKind,
    pub learning_rate: Option<f64>,
    pub seed: usize,
    /// Eigenvalue estimate per power iteration, or inversion loss per attack iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub iterations_to_tolerance: Option<usize>,
    /// Forward-backward passes: two per power iteration (vjp, jvp) and two per
    /// attack step (gradient, jvp), counted up to the tolerance or the end.
    pub derivative_passes: usize,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRatio {
    pub power_passes_mean: f64,
    pub attack_passes_mean: f64,
    pub pass_ratio: f64,
    pub time_ratio: f64,
}

fn first_converged(trace: &[f64], kind: TraceKind, tol: f64) -> Option<usize> {
    match kind {
        TraceKind::Power => (1..trace.len())
            .find(|&i| (trace[i] - trace[i - 1]).abs() <= tol * trace[i].abs())
            .map(|i| i + 1),
        TraceKind::Attack => (0..trace.len()).find(|&t| trace[t] <= tol * trace[0]),
    }
}

/// Power-iteration traces against attack-loss traces on the first sample.
pub fn run_efficiency(setup: &Setup) -> Result<(Outcome<EfficiencyRun>, Option<EfficiencyRatio>)> {
    let cfg = &setup.config;
    let ef = &cfg.efficiency;
    let sample = &setup.samples[0];
    let mut jobs: Vec<(TraceKind, Option<f64>, usize)> =
        (0..ef.seeds).map(|k| (TraceKind::Power, None, k)).collect();
    for &lr in &ef.learning_rates {
        jobs.extend((0..ef.seeds).map(|k| (TraceKind::Attack, Some(lr), k)));
    }
    let results = run_jobs(&jobs, |_, &(kind, lr, k)| {
        let mut op = SecondOrder::new(&setup.model, &setup.params, &sample.x, sample.label)?;
        match kind {
            TraceKind::Power => {
                let pcfg = PowerConfig {
                    max_iters: cfg.solver.power_iters,
                    tolerance: ef.power_tolerance,
                    seed: setup.seed(stream::POWER, k as u64),
                };
                let start = Instant::now();
                let r = power_iteration(&mut op, &pcfg)?;
                let wall_secs = start.elapsed().as_secs_f64();
                let reached = first_converged(&r.trace, kind, ef.power_tolerance);
                Ok(EfficiencyRun {
                    kind,
                    learning_rate: None,
                    seed: k,
                    iterations: r.iterations,
                    iterations_to_tolerance: reached,
                    derivative_passes: 2 * reached.unwrap_or(r.iterations),
                    trace: r.trace,
                    wall_secs,
                })
            }
            TraceKind::Attack => {
                let g0 = op.gradients()?.g_theta;
                let mut acfg = setup.attack_config(k as u64);
                acfg.learning_rate = lr.expect("attack jobs carry a learning rate");
                let r = attack(&setup.model, &setup.params, &g0, sample.label, &acfg)?;
                let iterations = r.loss_trace.len() - 1;
                let reached = first_converged(&r.loss_trace, kind, ef.attack_tolerance);
                Ok(EfficiencyRun {
                    kind,
                    learning_rate: lr,
                    seed: k,
                    iterations,
                    iterations_to_tolerance: reached,
                    derivative_passes: 2 * reached.unwrap_or(iterations),
                    trace: r.loss_trace,
                    wall_secs: r.wall_time_secs,
                })
            }
        }
    });
    let (rows, failures) = partition(results, |i| {
        let (kind, lr, k) = jobs[i];
        format!("{} lr {lr:?} seed {k}", kind.name())
    });
    let rows: Vec<EfficiencyRun> = rows.into_iter().map(|(_, r)| r).collect();

    let of = |kind: TraceKind| rows.iter().filter(move |r| r.kind == kind);
    let passes = |kind| {
        of(kind)
            .map(|r| r.derivative_passes as f64)
            .collect::<Vec<_>>()
    };
    let secs = |kind| of(kind).map(|r| r.wall_secs).collect::<Vec<_>>();
    let ratio = (of(TraceKind::Power).next().is_some() && of(TraceKind::Attack).next().is_some())
        .then(|| {
            let (p, a) = (
                mean(&passes(TraceKind::Power)),
                mean(&passes(TraceKind::Attack)),
            );
            EfficiencyRatio {
                power_passes_mean: p,
                attack_passes_mean: a,
                pass_ratio: a / p,
                time_ratio: mean(&secs(TraceKind::Attack)) / mean(&secs(TraceKind::Power)),
            }
        });

    let mut out = OutputDir::create(&cfg.output_dir, Provenance::new("efficiency", setup))?;
    let mut traces = Report::new(&["trace", "learning_rate", "seed", "iteration", "value"]);
    let mut summary = Report::new(&[
        "trace",
        "learning_rate",
        "seed",
        "iterations",
        "iterations_to_tolerance",
        "derivative_passes",
        "final_value",
    ]);
    for r in &rows {
        for (i, v) in r.trace.iter().enumerate() {
            traces.push(vec![
                r.kind.name().into(),
                r.learning_rate.into(),
                r.seed.into(),
                i.into(),
                (*v).into(),
            ]);
        }
        summary.push(vec![
            r.kind.name().into(),
            r.learning_rate.into(),
            r.seed.into(),
            r.iterations.into(),
            r.iterations_to_tolerance.map_or(Cell::Missing, Cell::from),
            r.derivative_passes.into(),
            r.trace.last().copied().into(),
        ]);
    }
    out.csv("efficiency_traces.csv", traces)?;
    out.csv("efficiency_summary.csv", summary)?;
    let mut ratio_report = Report::new(&["power_passes_mean", "attack_passes_mean", "pass_ratio"]);
    if let Some(r) = &ratio {
        ratio_report.push(vec![
            r.power_passes_mean.into(),
            r.attack_passes_mean.into(),
            r.pass_ratio.into(),
        ]);
        let timing = serde_json::json!({
            "power_secs": secs(TraceKind::Power),
            "attack_secs": secs(TraceKind::Attack),
            "time_ratio": r.time_ratio,
        });
        out.text(
            "efficiency_timing.json",
            &serde_json::to_string_pretty(&timing).expect("json"),
        )?;
    }
    out.csv("efficiency_ratio.csv", ratio_report)?;
    let manifest = out.manifest(&failures)?;
    Ok((
        Outcome {
            rows,
            files: out.written,
            failures,
            manifest,
        },
        ratio,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_points() {
        let power = [1.0, 2.0, 2.0000001, 2.0000001];
        assert_eq!(first_converged(&power, TraceKind::Power, 1e-6), Some(3));
        assert_eq!(
            first_converged(&[4.0, 1.0, 1e-5], TraceKind::Attack, 1e-4),
            Some(2)
        );
        assert_eq!(first_converged(&[4.0, 1.0], TraceKind::Attack, 1e-4), None);
    }
}
