use std::collections::BTreeMap;

use leakcheck_core::attacks::gaussian_perturbation;
use leakcheck_core::data::{Cell, Report};
use leakcheck_core::derivatives::SecondOrder;
use leakcheck_core::metrics::i2f_lower_bound_op;
use leakcheck_core::tensor::norm;

use super::{header, run_attack, AttackSummary, Outcome};
use crate::config::{stream, Setup};
use crate::error::Result;
use crate::output::{partition, run_jobs, OutputDir, Provenance};
use crate::stats::{mean, percentile, variance};

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRow {
    pub sample: usize,
    pub source: String,
    pub label: usize,
    pub delta_norm: f64,
    pub i2f_lower_bound: Option<f64>,
    pub attack: AttackSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub class: usize,
    pub count: usize,
    pub mean_mse: f64,
    pub variance_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessSummary {
    pub classes: Vec<ClassRow>,
    /// 90th over 10th percentile of per-sample MSE.
    pub percentile_ratio: f64,
    /// Largest over smallest class-mean MSE.
    pub class_mean_ratio: f64,
    pub best_sample: usize,
    pub worst_sample: usize,
}

pub fn class_aggregates(rows: &[FairnessRow]) -> Vec<ClassRow> {
    let mut by_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_class.entry(r.label).or_default().push(r.attack.mse);
    }
    by_class
        .into_iter()
        .map(|(class, v)| ClassRow {
            class,
            count: v.len(),
            mean_mse: mean(&v),
            variance_mse: variance(&v),
        })
        .collect()
}

/// Per-sample attack MSE at a fixed Gaussian noise variance.
pub fn run_fairness(setup: &Setup) -> Result<(Outcome<FairnessRow>, Option<FairnessSummary>)> {
    let cfg = &setup.config;
    let var = cfg.fairness.variance;
    let jobs: Vec<usize> = (0..setup.samples.len()).collect();
    let results = run_jobs(&jobs, |_, &s| {
        let sample = &setup.samples[s];
        let mut op = SecondOrder::new(&setup.model, &setup.params, &sample.x, sample.label)?;
        let g0 = op.gradients()?.g_theta;
        let (target, delta) = gaussian_perturbation(&g0, var, setup.seed(stream::NOISE, s as u64));
        let lb = i2f_lower_bound_op(&mut op, &delta, &cfg.solver.power())?;
        let attack = run_attack(
            &setup.model,
            &setup.params,
            &target,
            sample,
            &setup.attack_config(s as u64),
        )?;
        Ok(FairnessRow {
            sample: s,
            source: sample.source.clone(),
            label: sample.label,
            delta_norm: norm(&delta),
            i2f_lower_bound: lb.lower_bound,
            attack,
        })
    });
    let (rows, failures) = partition(results, |s| format!("sample {s}"));
    let rows: Vec<FairnessRow> = rows.into_iter().map(|(_, r)| r).collect();

    let mut out = OutputDir::create(&cfg.output_dir, Provenance::new("fairness", setup))?;
    let mut report = Report::new(&header(
        &[
            "sample",
            "source",
            "label",
            "variance",
            "delta_norm",
            "i2f_lower_bound",
        ],
        &AttackSummary::HEADER,
    ));
    for r in &rows {
        let mut cells: Vec<Cell> = vec![
            r.sample.into(),
            r.source.clone().into(),
            r.label.into(),
            var.into(),
            r.delta_norm.into(),
            r.i2f_lower_bound.into(),
        ];
        cells.extend(r.attack.cells());
        report.push(cells);
    }
    out.csv("fairness.csv", report)?;

    let summary = (!rows.is_empty()).then(|| {
        let classes = class_aggregates(&rows);
        let mse: Vec<f64> = rows.iter().map(|r| r.attack.mse).collect();
        let by_mse = |a: &&FairnessRow, b: &&FairnessRow| a.attack.mse.total_cmp(&b.attack.mse);
        let means: Vec<f64> = classes.iter().map(|c| c.mean_mse).collect();
        FairnessSummary {
            percentile_ratio: percentile(&mse, 0.9) / percentile(&mse, 0.1),
            class_mean_ratio: means.iter().cloned().fold(f64::MIN, f64::max)
                / means.iter().cloned().fold(f64::MAX, f64::min),
            // Largest MSE is the best-protected sample, smallest the worst.
            best_sample: rows.iter().max_by(by_mse).expect("non-empty").sample,
            worst_sample: rows.iter().min_by(by_mse).expect("non-empty").sample,
            classes,
        }
    });
    let mut class_report = Report::new(&["class", "count", "mean_mse", "variance_mse"]);
    let mut summary_report = Report::new(&["metric", "value"]);
    if let Some(s) = &summary {
        for c in &s.classes {
            class_report.push(vec![
                c.class.into(),
                c.count.into(),
                c.mean_mse.into(),
                c.variance_mse.into(),
            ]);
        }
        summary_report.push(vec!["samples".into(), rows.len().into()]);
        summary_report.push(vec!["p90_p10_mse_ratio".into(), s.percentile_ratio.into()]);
        summary_report.push(vec![
            "max_min_class_mean_ratio".into(),
            s.class_mean_ratio.into(),
        ]);
        summary_report.push(vec!["best_protected_sample".into(), s.best_sample.into()]);
        summary_report.push(vec!["worst_protected_sample".into(), s.worst_sample.into()]);
        let shape = setup.model.input_shape();
        for (tag, idx) in [("best", s.best_sample), ("worst", s.worst_sample)] {
            let r = rows.iter().find(|r| r.sample == idx).expect("row exists");
            out.image(
                &format!("fairness_{tag}_original.pgm"),
                &setup.samples[idx].x,
                shape,
            )?;
            out.image(
                &format!("fairness_{tag}_recovered.pgm"),
                &r.attack.recovered,
                shape,
            )?;
        }
    }
    out.csv("fairness_classes.csv", class_report)?;
    out.csv("fairness_summary.csv", summary_report)?;
    let manifest = out.manifest(&failures)?;
    Ok((
        Outcome {
            rows,
            files: out.written,
            failures,
            manifest,
        },
        summary,
    ))
}
