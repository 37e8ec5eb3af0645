use leakcheck_core::attacks::singular_direction_perturbation;
use leakcheck_core::data::{Cell, Report};
use leakcheck_core::derivatives::SecondOrder;
use leakcheck_core::metrics::dense_spectrum_op;
use leakcheck_core::tensor::{add, norm};

use super::{header, run_attack, AttackSummary, Outcome};
use crate::config::Setup;
use crate::error::Result;
use crate::output::{partition, run_jobs, OutputDir, Provenance};
use crate::stats::spearman;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenRow {
    pub sample: usize,
    pub source: String,
    pub label: usize,
    /// Position on the ladder, 0 = largest singular value.
    pub direction: usize,
    /// Index into the descending spectrum.
    pub index: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub delta_norm: f64,
    /// `||J^+ delta||`, which equals `scale / sigma`.
    pub predicted_l2: f64,
    pub attack: AttackSummary,
}

/// `k` indices into a descending spectrum of length `rank`, spaced evenly in
/// `log(lambda)` from the largest to the smallest eigenvalue.
pub fn ladder_indices(eigenvalues: &[f64], k: usize) -> Vec<usize> {
    let r = eigenvalues.len();
    if r <= k {
        return (0..r).collect();
    }
    if k == 1 {
        return vec![0];
    }
    let (hi, lo) = (eigenvalues[0].ln(), eigenvalues[r - 1].ln());
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for j in 0..k {
        let target = hi + (lo - hi) * j as f64 / (k - 1) as f64;
        let last = r - (k - j);
        let best = (next..=last)
            .min_by(|&a, &b| {
                (eigenvalues[a].ln() - target)
                    .abs()
                    .total_cmp(&(eigenvalues[b].ln() - target).abs())
            })
            .expect("non-empty range");
        out.push(best);
        next = best + 1;
    }
    out
}

/// Equal-norm perturbations along singular directions spanning the spectrum.
/// All directions of a sample share one attack seed.
pub fn run_eigen_defense(setup: &Setup) -> Result<Outcome<EigenRow>> {
    let cfg = &setup.config;
    let ecfg = cfg.eigen_defense;
    let jobs: Vec<usize> = (0..setup.samples.len()).collect();
    let results = run_jobs(&jobs, |_, &s| {
        let sample = &setup.samples[s];
        let mut op = SecondOrder::new(&setup.model, &setup.params, &sample.x, sample.label)?;
        let g0 = op.gradients()?.g_theta;
        let spectrum = dense_spectrum_op(&mut op, cfg.solver.dense_budget)?;
        let rep = &spectrum.report;
        let attack_cfg = setup.attack_config(s as u64);
        ladder_indices(&rep.eigenvalues[..rep.rank], ecfg.directions)
            .into_iter()
            .enumerate()
            .map(|(direction, index)| {
                let delta = singular_direction_perturbation(&spectrum, index, ecfg.scale)?;
                let attack = run_attack(
                    &setup.model,
                    &setup.params,
                    &add(&g0, &delta),
                    sample,
                    &attack_cfg,
                )?;
                let sigma = rep.singular_values[index];
                Ok(EigenRow {
                    sample: s,
                    source: sample.source.clone(),
                    label: sample.label,
                    direction,
                    index,
                    sigma,
                    lambda: rep.eigenvalues[index],
                    delta_norm: norm(&delta),
                    predicted_l2: spectrum.pseudo_inverse_response(&delta)?,
                    attack,
                })
            })
            .collect::<leakcheck_core::Result<Vec<_>>>()
    });
    let (groups, failures) = partition(results, |s| format!("sample {s}"));

    let mut out = OutputDir::create(&cfg.output_dir, Provenance::new("eigen-defense", setup))?;
    let mut report = Report::new(&header(
        &[
            "sample",
            "source",
            "label",
            "direction",
            "index",
            "sigma",
            "lambda",
            "inv_sqrt_lambda",
            "inv_lambda",
            "delta_norm",
            "predicted_l2",
        ],
        &AttackSummary::HEADER,
    ));
    let mut summary = Report::new(&["sample", "directions", "spearman_mse_sigma"]);
    let mut rows = Vec::new();
    for (_, group) in groups {
        for r in &group {
            let mut cells: Vec<Cell> = vec![
                r.sample.into(),
                r.source.clone().into(),
                r.label.into(),
                r.direction.into(),
                r.index.into(),
                r.sigma.into(),
                r.lambda.into(),
                (1.0 / r.sigma).into(),
                (1.0 / r.lambda).into(),
                r.delta_norm.into(),
                r.predicted_l2.into(),
            ];
            cells.extend(r.attack.cells());
            report.push(cells);
        }
        let mse: Vec<f64> = group.iter().map(|r| r.attack.mse).collect();
        let sigma: Vec<f64> = group.iter().map(|r| r.sigma).collect();
        let rho = if group.len() > 1 {
            Some(spearman(&mse, &sigma))
        } else {
            None
        };
        summary.push(vec![group[0].sample.into(), group.len().into(), rho.into()]);
        rows.extend(group);
    }
    out.csv("eigen_defense.csv", report)?;
    out.csv("eigen_defense_summary.csv", summary)?;
    if cfg.dump_images {
        let shape = setup.model.input_shape();
        for r in &rows {
            out.image(
                &format!("eigen_s{}_d{}_recovered.pgm", r.sample, r.direction),
                &r.attack.recovered,
                shape,
            )?;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_spans_the_spectrum() {
        let eig: Vec<f64> = (0..100).map(|i| 10f64.powf(-(i as f64) / 10.0)).collect();
        assert_eq!(ladder_indices(&eig, 4), vec![0, 33, 66, 99]);
        assert_eq!(ladder_indices(&eig[..3], 4), vec![0, 1, 2]);
        assert_eq!(ladder_indices(&eig, 1), vec![0]);
    }

    #[test]
    fn ladder_indices_are_distinct_for_clustered_spectra() {
        let eig = [1.0, 1e-6, 1e-6, 1e-6, 1e-6];
        let idx = ladder_indices(&eig, 4);
        assert!(idx.windows(2).all(|w| w[0] < w[1]), "{idx:?}");
        assert_eq!(idx[0], 0);
    }
}
