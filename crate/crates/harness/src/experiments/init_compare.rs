use leakcheck_core::attacks::gaussian_perturbation;
use leakcheck_core::data::{Cell, Report};
use leakcheck_core::derivatives::SecondOrder;
use leakcheck_core::metrics::{dense_eigenvalues_op, expected_gaussian_risk};
use leakcheck_core::models::{initialize_parameters, InitKind, InitScheme};
use leakcheck_core::rng::derive_seed;
use leakcheck_core::tensor::norm;

use super::{header, run_attack, AttackSummary, Outcome};
use crate::config::{stream, Setup};
use crate::error::Result;
use crate::output::{partition, run_jobs, OutputDir, Provenance};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq)]
pub struct InitRow {
    pub scheme: InitKind,
    pub repetition: usize,
    pub sample: usize,
    pub source: String,
    pub label: usize,
    pub delta_norm: f64,
    /// `sum_i 1 / lambda_i` of the dense `J J^T`; missing when rank-deficient.
    pub sum_inv_lambda: Option<f64>,
    pub attack: AttackSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: InitKind,
    pub rows: usize,
    pub mean_mse: f64,
    /// 1 for the lowest mean MSE.
    pub rank: usize,
}

/// Attack MSE per (scheme, repetition, sample). Repetition `r` draws the
/// parameters from seed stream `r`; noise and attack seeds depend only on
/// (repetition, sample), so every scheme sees the same draws.
pub fn run_init_compare(setup: &Setup) -> Result<(Outcome<InitRow>, Vec<SchemeSummary>)> {
    let cfg = &setup.config;
    let ic = &cfg.init_compare;
    let n = setup.samples.len();
    let jobs: Vec<(InitKind, usize, usize)> = ic
        .schemes
        .iter()
        .flat_map(|&k| (0..ic.repetitions).flat_map(move |r| (0..n).map(move |s| (k, r, s))))
        .collect();
    let results = run_jobs(&jobs, |_, &(kind, rep, s)| {
        let sample = &setup.samples[s];
        let scheme = InitScheme::new(kind, derive_seed(setup.seed(stream::INIT, 0), rep as u64));
        let params = initialize_parameters(&setup.model, scheme);
        let key = (rep * n + s) as u64;
        let mut op = SecondOrder::new(&setup.model, &params, &sample.x, sample.label)?;
        let g0 = op.gradients()?.g_theta;
        let (target, delta) =
            gaussian_perturbation(&g0, ic.variance, setup.seed(stream::NOISE, key));
        let sum_inv_lambda = if ic.expected_risk {
            let spectrum = dense_eigenvalues_op(&mut op, cfg.solver.dense_budget)?;
            expected_gaussian_risk(&spectrum, 1.0).ok()
        } else {
            None
        };
        let attack = run_attack(
            &setup.model,
            &params,
            &target,
            sample,
            &setup.attack_config(key),
        )?;
        Ok(InitRow {
            scheme: kind,
            repetition: rep,
            sample: s,
            source: sample.source.clone(),
            label: sample.label,
            delta_norm: norm(&delta),
            sum_inv_lambda,
            attack,
        })
    });
    let (rows, failures) = partition(results, |i| {
        let (k, r, s) = jobs[i];
        format!("scheme {} repetition {r} sample {s}", k.name())
    });
    let rows: Vec<InitRow> = rows.into_iter().map(|(_, r)| r).collect();

    let mut summaries: Vec<SchemeSummary> = ic
        .schemes
        .iter()
        .filter_map(|&scheme| {
            let mse: Vec<f64> = rows
                .iter()
                .filter(|r| r.scheme == scheme)
                .map(|r| r.attack.mse)
                .collect();
            (!mse.is_empty()).then(|| SchemeSummary {
                scheme,
                rows: mse.len(),
                mean_mse: mean(&mse),
                rank: 0,
            })
        })
        .collect();
    let mut order: Vec<usize> = (0..summaries.len()).collect();
    order.sort_by(|&a, &b| summaries[a].mean_mse.total_cmp(&summaries[b].mean_mse));
    for (rank, i) in order.into_iter().enumerate() {
        summaries[i].rank = rank + 1;
    }

    let mut out = OutputDir::create(&cfg.output_dir, Provenance::new("init-compare", setup))?;
    let mut report = Report::new(&header(
        &[
            "scheme",
            "repetition",
            "sample",
            "source",
            "label",
            "variance",
            "delta_norm",
            "sum_inv_lambda",
            "expected_i2",
        ],
        &AttackSummary::HEADER,
    ));
    for r in &rows {
        let mut cells: Vec<Cell> = vec![
            r.scheme.name().into(),
            r.repetition.into(),
            r.sample.into(),
            r.source.clone().into(),
            r.label.into(),
            ic.variance.into(),
            r.delta_norm.into(),
            r.sum_inv_lambda.into(),
            r.sum_inv_lambda.map(|s| s * ic.variance).into(),
        ];
        cells.extend(r.attack.cells());
        report.push(cells);
    }
    out.csv("init_compare.csv", report)?;
    let mut summary = Report::new(&["scheme", "rows", "mean_mse", "rank"]);
    for s in &summaries {
        summary.push(vec![
            s.scheme.name().into(),
            s.rows.into(),
            s.mean_mse.into(),
            s.rank.into(),
        ]);
    }
    out.csv("init_compare_summary.csv", summary)?;
    let manifest = out.manifest(&failures)?;
    Ok((
        Outcome {
            rows,
            files: out.written,
            failures,
            manifest,
        },
        summaries,
    ))
}
