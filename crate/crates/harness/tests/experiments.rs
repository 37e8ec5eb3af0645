use std::path::Path;

use leakcheck::experiments::{
    run_audit, run_efficiency, run_eigen_defense, run_fairness, run_init_compare, run_spectrum,
};
use leakcheck::stats::pearson;
use leakcheck::validate::check_operator;
use leakcheck::{ExperimentConfig, Overrides, Setup};
use leakcheck_core::data::read_report_csv;
use leakcheck_core::derivatives::{DenseOperator, JacobianOperator};
use leakcheck_core::rng;

fn setup(json: &str, out: &Path) -> Setup {
    let mut cfg = ExperimentConfig::from_json(json).unwrap();
    cfg.apply(&Overrides {
        out: Some(out.into()),
        ..Default::default()
    });
    cfg.prepare().unwrap()
}

const LINEAR: &str = r#"{
    "seed": 5,
    "model": {"kind": "linear_dot", "dim": 8},
    "dataset": {"source": "synthetic", "generator": {"kind": "gaussian_blobs", "classes": 2}},
    "samples": 3,
    "perturbations": [{"kind": "gaussian", "variance": 0.001}, {"kind": "gaussian", "variance": 0.01}],
    "solver": {"mode": "conjugate_gradient", "epsilon": 0.0},
    "attack": {"kind": "dgl", "iterations": 1000}
}"#;

const TINY_MLP: &str = r#"{
    "seed": 9,
    "model": {"kind": "mlp", "dim": 4, "hidden": [3], "classes": 2, "activation": "tanh"},
    "dataset": {"source": "synthetic", "generator": {"kind": "gaussian_blobs", "classes": 2}, "size": 8},
    "samples": 3,
    "perturbations": [{"kind": "gaussian", "variance": 0.001}],
    "attack": {"kind": "dgl", "iterations": 100},
    "train": {"epochs": 2, "learning_rate": 0.1, "seed": 1},
    "init_compare": {"repetitions": 2, "variance": 0.001},
    "efficiency": {"seeds": 2, "learning_rates": [0.1, 0.3]}
}"#;

#[test]
fn linear_audit_recovers_noise_norm() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_audit(&setup(LINEAR, dir.path())).unwrap();
    assert_eq!(out.rows.len(), 3 * 2);
    for r in &out.rows {
        let i2f = r.i2f_exact.unwrap();
        assert!((r.attack.l2 - i2f).abs() < 1e-3, "{} vs {i2f}", r.attack.l2);
        assert!((i2f - r.delta_norm).abs() < 1e-9);
        assert!(r.i2f_lower_bound.unwrap() <= i2f + 1e-8);
    }
}

#[test]
fn audit_rows_cover_epochs_samples_and_perturbations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_audit(&setup(TINY_MLP, dir.path())).unwrap();
    assert_eq!(out.rows.len(), 3 * 3);
    let epochs: std::collections::BTreeSet<_> = out.rows.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(out.manifest.is_none());
}

#[test]
fn csv_outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let s = setup(LINEAR, dir.path());
    run_audit(&s).unwrap();
    let text = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# leakcheck audit"));
    assert_eq!(
        lines.next().unwrap(),
        format!("# config_sha256: {}", s.config.hash())
    );
    assert_eq!(lines.next(), Some("# seed: 5"));
    let report = read_report_csv(&dir.path().join("audit.csv")).unwrap();
    assert_eq!(report.2.len(), 6);
}

#[test]
fn failed_jobs_land_in_the_manifest() {
    let json = LINEAR.replace(
        r#"{"kind": "gaussian", "variance": 0.01}"#,
        r#"{"kind": "singular_direction", "index": 99, "scale": 0.1}"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let out = run_audit(&setup(&json, dir.path())).unwrap();
    assert_eq!(out.rows.len(), 3);
    assert_eq!(out.failures.len(), 3);
    let manifest = out.manifest.unwrap();
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 3);
    assert!(dir.path().join("audit.csv").exists());
}

#[test]
fn one_layer_lower_bound_tracks_attack_error() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/audit_one_layer.json");
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.apply(&Overrides {
        out: Some(dir.path().into()),
        ..Default::default()
    });
    let out = run_audit(&cfg.prepare().unwrap()).unwrap();
    let lb: Vec<f64> = out
        .rows
        .iter()
        .map(|r| r.i2f_lower_bound.unwrap())
        .collect();
    let l2: Vec<f64> = out.rows.iter().map(|r| r.attack.l2).collect();
    assert!(pearson(&lb, &l2) > 0.8);
}

#[test]
fn single_sample_fairness_has_zero_variance() {
    let json = TINY_MLP.replace(r#""samples": 3"#, r#""samples": 1"#);
    let dir = tempfile::tempdir().unwrap();
    let (out, summary) = run_fairness(&setup(&json, dir.path())).unwrap();
    assert_eq!(out.rows.len(), 1);
    let s = summary.unwrap();
    assert_eq!(s.classes.len(), 1);
    assert_eq!(s.classes[0].variance_mse, 0.0);
    assert_eq!(s.best_sample, s.worst_sample);
}

#[test]
fn init_compare_expected_risk_matches_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let (out, summaries) = run_init_compare(&setup(TINY_MLP, dir.path())).unwrap();
    assert_eq!(summaries.len(), 4);
    assert!(summaries.iter().all(|s| s.rows == 2 * 3));
    let ranks: std::collections::BTreeSet<_> = summaries.iter().map(|s| s.rank).collect();
    assert_eq!(ranks.len(), 4);
    let (_, header, rows) = read_report_csv(&dir.path().join("init_compare.csv")).unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (sum, expected) = (col("sum_inv_lambda"), col("expected_i2"));
    for (row, r) in rows.iter().zip(&out.rows) {
        let s: f64 = row[sum].parse().unwrap();
        let e: f64 = row[expected].parse().unwrap();
        assert!((e - 0.001 * s).abs() <= 1e-9 * e.abs());
        assert!((s - r.sum_inv_lambda.unwrap()).abs() <= 1e-12 * s);
    }
}

#[test]
fn efficiency_is_deterministic_apart_from_timing() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, ratio) = run_efficiency(&setup(TINY_MLP, a.path())).unwrap();
    run_efficiency(&setup(TINY_MLP, b.path())).unwrap();
    assert_eq!(ra.rows.len(), 2 + 2 * 2);
    assert!(ratio.unwrap().pass_ratio.is_finite());
    for f in [
        "efficiency_traces.csv",
        "efficiency_summary.csv",
        "efficiency_ratio.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(a.path().join("efficiency_timing.json").exists());
}

#[test]
fn eigen_defense_and_spectrum_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let s = setup(
        &TINY_MLP.replace(r#""samples": 3"#, r#""samples": 2"#),
        dir.path(),
    );
    let eig = run_eigen_defense(&s).unwrap();
    assert_eq!(eig.rows.len(), 2 * 4);
    assert!(dir.path().join("eigen_defense_summary.csv").exists());
    let spec = run_spectrum(&s).unwrap();
    assert_eq!(spec.rows.len(), 2);
    assert!(spec.rows.iter().all(|r| r.spectrum.eigenvalues.len() == 4));
}

struct FlippedVjp(DenseOperator);

impl JacobianOperator for FlippedVjp {
    fn dim_x(&self) -> usize {
        self.0.dim_x()
    }
    fn dim_theta(&self) -> usize {
        self.0.dim_theta()
    }
    fn jvp(&mut self, delta: &[f64]) -> leakcheck_core::Result<Vec<f64>> {
        self.0.jvp(delta)
    }
    fn vjp(&mut self, b: &[f64]) -> leakcheck_core::Result<Vec<f64>> {
        Ok(self.0.vjp(b)?.iter().map(|v| -v).collect())
    }
}

#[test]
fn operator_checks_catch_a_broken_adjoint() {
    let mut r = rng::seeded(2);
    let dense = DenseOperator::from_rows(3, 6, &rng::gaussian_vec(&mut r, 18));
    let good = check_operator("dense", &mut dense.clone(), 1, 500);
    assert!(good.iter().all(|c| c.passed), "{good:?}");
    let bad = check_operator("flipped", &mut FlippedVjp(dense), 1, 500);
    let adjoint = bad.iter().find(|c| c.name == "flipped/adjoint").unwrap();
    assert!(!adjoint.passed);
}
