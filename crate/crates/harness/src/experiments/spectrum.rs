use leakcheck_core::data::Report;
use leakcheck_core::derivatives::SecondOrder;
use leakcheck_core::metrics::{dense_spectrum_op, expected_gaussian_risk, SpectrumReport};

use super::Outcome;
use crate::config::Setup;
use crate::error::Result;
use crate::output::{partition, run_jobs, OutputDir, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub sample: usize,
    pub source: String,
    pub label: usize,
    pub spectrum: SpectrumReport,
}

/// Dense eigenvalues of `J J^T` per sample.
pub fn run_spectrum(setup: &Setup) -> Result<Outcome<SpectrumRow>> {
    let cfg = &setup.config;
    let jobs: Vec<usize> = (0..setup.samples.len()).collect();
    let results = run_jobs(&jobs, |_, &s| {
        let sample = &setup.samples[s];
        let mut op = SecondOrder::new(&setup.model, &setup.params, &sample.x, sample.label)?;
        let spectrum = dense_spectrum_op(&mut op, cfg.solver.dense_budget)?.report;
        Ok(SpectrumRow {
            sample: s,
            source: sample.source.clone(),
            label: sample.label,
            spectrum,
        })
    });
    let (rows, failures) = partition(results, |s| format!("sample {s}"));
    let rows: Vec<SpectrumRow> = rows.into_iter().map(|(_, r)| r).collect();

    let mut out = OutputDir::create(&cfg.output_dir, Provenance::new("spectrum", setup))?;
    let mut values = Report::new(&[
        "sample",
        "index",
        "eigenvalue",
        "singular_value",
        "above_threshold",
    ]);
    let mut summary = Report::new(&[
        "sample",
        "source",
        "label",
        "d_x",
        "rank",
        "threshold",
        "lambda_max",
        "sum_inv_lambda",
    ]);
    for r in &rows {
        let sp = &r.spectrum;
        for (i, (l, s)) in sp.eigenvalues.iter().zip(&sp.singular_values).enumerate() {
            values.push(vec![
                r.sample.into(),
                i.into(),
                (*l).into(),
                (*s).into(),
                (i < sp.rank).into(),
            ]);
        }
        summary.push(vec![
            r.sample.into(),
            r.source.clone().into(),
            r.label.into(),
            sp.eigenvalues.len().into(),
            sp.rank.into(),
            sp.threshold.into(),
            sp.lambda_max().into(),
            expected_gaussian_risk(sp, 1.0).ok().into(),
        ]);
    }
    out.csv("spectrum.csv", values)?;
    out.csv("spectrum_summary.csv", summary)?;
    let manifest = out.manifest(&failures)?;
    Ok(Outcome {
        rows,
        files: out.written,
        failures,
        manifest,
    })
}
