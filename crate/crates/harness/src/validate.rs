//! The oracle suite behind `leakcheck validate`.

use leakcheck_core::attacks::{attack, AttackConfig, AttackKind};
use leakcheck_core::autograd::Activation;
use leakcheck_core::data::{synthetic_samples, Cell, Report, SyntheticKind};
use leakcheck_core::derivatives::{
    finite_difference_oracle, FdTarget, JacobianOperator, SecondOrder, DEFAULT_MATERIALIZE_BUDGET,
};
use leakcheck_core::metrics::{
    certified_bound, dense_spectrum_op, expected_gaussian_risk, i2f_exact_op, i2f_lower_bound_op,
    power_iteration, PowerConfig, SolverConfig, SolverMode,
};
use leakcheck_core::models::{
    build_model, initialize_parameters, zoo, InitKind, InitScheme, Model, ModelSpec, ParameterSet,
};
use leakcheck_core::rng::{self, derive_seed};
use leakcheck_core::tensor::{add, dot, norm, sub};

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }

    fn failed(name: impl Into<String>, err: &leakcheck_core::Error) -> Self {
        Self {
            name: format!("{} ({err})", name.into()),
            measured: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
        }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!(
            "{status} {} measured={:.3e} tolerance={:.1e}",
            self.name, self.measured, self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new(&["check", "measured", "tolerance", "passed"]);
        for c in &self.checks {
            r.push(vec![
                c.name.clone().into(),
                c.measured.into(),
                c.tolerance.into(),
                Cell::from(c.passed),
            ]);
        }
        r
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b).max(f64::MIN_POSITIVE)
}

fn guarded(name: &str, f: impl FnOnce() -> leakcheck_core::Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, &e))
}

/// Adjoint identity, matrix-free against dense solves, power iteration against
/// the dense spectrum, lower-bound ordering and the Gaussian-risk identity.
/// `J J^T` must be nonsingular.
pub fn check_operator<O: JacobianOperator + ?Sized>(
    tag: &str,
    op: &mut O,
    seed: u64,
    mc_draws: usize,
) -> Vec<Check> {
    let (dx, dt) = (op.dim_x(), op.dim_theta());
    let mut rng = rng::seeded(seed);
    let mut checks = Vec::new();

    checks.push(guarded(&format!("{tag}/adjoint"), || {
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let delta = rng::gaussian_vec(&mut rng, dt);
            let b = rng::gaussian_vec(&mut rng, dx);
            let jd = op.jvp(&delta)?;
            let jtb = op.vjp(&b)?;
            let gap = (dot(&jd, &b) - dot(&delta, &jtb)).abs()
                / (norm(&jd) * norm(&b)).max(f64::MIN_POSITIVE);
            worst = worst.max(gap);
        }
        Ok(Check::at_most(format!("{tag}/adjoint"), worst, 1e-9))
    }));

    for mode in [
        SolverMode::ConjugateGradient,
        SolverMode::GradientDescent,
        SolverMode::Neumann,
    ] {
        let name = format!("{tag}/{}_vs_dense", mode.name());
        let delta = rng::gaussian_vec(&mut rng, dt);
        checks.push(guarded(&name, || {
            let reference =
                i2f_exact_op(op, &delta, &SolverConfig::with_mode(SolverMode::Dense, 1.0))?;
            let got = i2f_exact_op(op, &delta, &SolverConfig::with_mode(mode, 1.0))?;
            Ok(Check::at_most(
                &name,
                rel(&got.solution, &reference.solution),
                1e-4,
            ))
        }));
    }

    let spectrum = match dense_spectrum_op(op, DEFAULT_MATERIALIZE_BUDGET) {
        Ok(s) => s,
        Err(e) => {
            checks.push(Check::failed(format!("{tag}/dense_spectrum"), &e));
            return checks;
        }
    };
    let name = format!("{tag}/power_vs_dense");
    checks.push(guarded(&name, || {
        let p = power_iteration(
            op,
            &PowerConfig {
                max_iters: 200,
                tolerance: 1e-12,
                seed,
            },
        )?;
        let dense = spectrum.report.lambda_max();
        Ok(Check::at_most(
            &name,
            (p.lambda_max - dense).abs() / dense,
            1e-6,
        ))
    }));

    let exact0 = SolverConfig {
        tolerance: 1e-12,
        max_iters: 10_000,
        ..SolverConfig::with_mode(SolverMode::ConjugateGradient, 0.0)
    };
    let name = format!("{tag}/lower_bound_ordering");
    checks.push(guarded(&name, || {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..10 {
            let delta = rng::gaussian_vec(&mut rng, dt);
            let lb = i2f_lower_bound_op(op, &delta, &PowerConfig::default())?
                .lower_bound
                .unwrap_or(f64::NAN);
            let ex = i2f_exact_op(op, &delta, &exact0)?
                .exact_value
                .unwrap_or(f64::NAN);
            worst = worst.max(lb - ex);
        }
        Ok(Check::at_most(&name, worst, 1e-8))
    }));

    let name = format!("{tag}/gaussian_risk_monte_carlo");
    checks.push(guarded(&name, || {
        let expected = expected_gaussian_risk(&spectrum.report, 1.0)?;
        let mut draws = Vec::with_capacity(mc_draws);
        for _ in 0..mc_draws {
            let delta = rng::gaussian_vec(&mut rng, dt);
            let v = i2f_exact_op(op, &delta, &exact0)?
                .exact_value
                .unwrap_or(f64::NAN);
            draws.push(v * v);
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        Ok(Check::at_most(&name, (mean - expected).abs() / se, 3.0))
    }));
    checks
}

/// Finite-difference checks of the gradients and the mixed product.
pub fn check_derivatives(
    tag: &str,
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
    seed: u64,
) -> Vec<Check> {
    let mut out = Vec::new();
    let run = || -> leakcheck_core::Result<Vec<Check>> {
        let mut op = SecondOrder::new(model, params, x, label)?;
        let g = op.gradients()?;
        let mut rng = rng::seeded(seed);
        let delta = rng::gaussian_vec(&mut rng, model.d_theta());
        let jd = op.jvp(&delta)?;
        let fd = |t: FdTarget| {
            let step = t.default_step();
            finite_difference_oracle(model, params, x, label, &t, step)
        };
        Ok(vec![
            Check::at_most(
                format!("{tag}/fd_grad_theta"),
                rel(&g.g_theta, &fd(FdTarget::GradTheta)?),
                1e-6,
            ),
            Check::at_most(
                format!("{tag}/fd_grad_x"),
                rel(&g.g_x, &fd(FdTarget::GradX)?),
                1e-6,
            ),
            Check::at_most(
                format!("{tag}/fd_mixed_jvp"),
                rel(&jd, &fd(FdTarget::Jvp(delta))?),
                1e-5,
            ),
        ])
    };
    match run() {
        Ok(c) => out.extend(c),
        Err(e) => out.push(Check::failed(format!("{tag}/derivatives"), &e)),
    }
    out
}

/// The certified bound never exceeds the measured recovery error on the
/// linear model, where every constant is analytic.
pub fn check_linear_bound(seed: u64) -> Check {
    let name = "linear/bound_below_recovery_error";
    guarded(name, || {
        let d = 6;
        let model = build_model(zoo::linear_dot(d))?;
        let mut rng = rng::seeded(seed);
        let params = ParameterSet::new(&model, rng::gaussian_vec(&mut rng, d))?;
        let mut worst = f64::NEG_INFINITY;
        for k in 0..5 {
            let x0: Vec<f64> = rng::gaussian_vec(&mut rng, d)
                .iter()
                .map(|v| 0.5 + 0.1 * v)
                .collect();
            let delta: Vec<f64> = rng::gaussian_vec(&mut rng, d)
                .iter()
                .map(|v| 0.05 * v)
                .collect();
            let g0 = x0.clone();
            let mut cfg = AttackConfig::new(AttackKind::Dgl);
            cfg.seed = derive_seed(seed, k);
            let r = attack(&model, &params, &add(&g0, &delta), 0, &cfg)?;
            let l2 = r.error_against(&x0)?.l2;
            let bound = certified_bound(1.0, 1.0, 0.0, &g0, &delta, norm(&delta))?;
            worst = worst.max((bound - l2) / norm(&delta));
        }
        Ok(Check::at_most(name, worst, 1e-9))
    })
}

fn fixture(
    spec: ModelSpec,
    seed: u64,
) -> leakcheck_core::Result<(Model, ParameterSet, Vec<f64>, usize)> {
    let model = build_model(spec)?;
    let params = initialize_parameters(&model, InitScheme::new(InitKind::Xavier, seed));
    let classes = model.num_classes().unwrap_or(2);
    let ds = synthetic_samples(
        &SyntheticKind::GaussianBlobs {
            classes,
            spread: 0.2,
        },
        1,
        &[model.d_x()],
        seed,
    )?;
    let s = ds.samples.into_iter().next().expect("one sample");
    Ok((model, params, s.x, s.label))
}

/// Every oracle check on a small fixed model set.
pub fn run_validate(seed: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let models = [
        ("one_layer", zoo::one_layer(4, Activation::Sigmoid, 0.3)),
        ("mlp", zoo::mlp(3, &[4], 2, Activation::Tanh)),
    ];
    for (k, (tag, spec)) in models.into_iter().enumerate() {
        let s = derive_seed(seed, k as u64);
        match fixture(spec, s) {
            Ok((model, params, x, label)) => {
                report
                    .checks
                    .extend(check_derivatives(tag, &model, &params, &x, label, s));
                match SecondOrder::new(&model, &params, &x, label) {
                    Ok(mut op) => report.checks.extend(check_operator(tag, &mut op, s, 2000)),
                    Err(e) => report.checks.push(Check::failed(tag, &e)),
                }
            }
            Err(e) => report.checks.push(Check::failed(tag, &e)),
        }
    }
    report.checks.push(check_linear_bound(seed));
    report
}
