//! `leakcheck`: gradient-leakage audits from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leakcheck::experiments::{
    run_audit, run_efficiency, run_eigen_defense, run_fairness, run_init_compare, run_spectrum,
};
use leakcheck::output::{OutputDir, Provenance};
use leakcheck::validate::run_validate;
use leakcheck::{ExperimentConfig, HarnessError, Overrides, Result};

#[derive(Parser)]
#[command(name = "leakcheck", version, about = "Gradient-leakage risk audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps the number of samples.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// I2F, lower bound and attack error per sample and perturbation.
    Audit(Common),
    /// Attack error along singular directions of the Jacobian.
    EigenDefense(Common),
    /// Per-sample and per-class attack error at fixed noise.
    Fairness(Common),
    /// Attack error across parameter initialization schemes.
    InitCompare(Common),
    /// Power-iteration versus attack convergence.
    Efficiency(Common),
    /// Dense eigenvalues of J J^T per sample.
    Spectrum(Common),
    /// Runs the oracle suite; exit 0 iff every check passes.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also writes validate.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn setup(c: &Common) -> Result<leakcheck::Setup> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        seed: c.seed,
        out: c.out.clone(),
        limit: c.limit,
    });
    cfg.prepare()
}

fn report<R>(o: leakcheck::experiments::Outcome<R>) -> Result<()> {
    for f in &o.files {
        println!("wrote {}", f.display());
    }
    match o.manifest {
        Some(manifest) => Err(HarnessError::JobsFailed {
            failed: o.failures.len(),
            total: o.failures.len() + o.rows.len(),
            manifest,
        }),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Audit(c) => report(run_audit(&setup(&c)?)?),
        Command::EigenDefense(c) => report(run_eigen_defense(&setup(&c)?)?),
        Command::Fairness(c) => {
            let (o, summary) = run_fairness(&setup(&c)?)?;
            if let Some(s) = summary {
                println!(
                    "p90/p10 MSE ratio {:.4}, max/min class-mean ratio {:.4}",
                    s.percentile_ratio, s.class_mean_ratio
                );
            }
            report(o)
        }
        Command::InitCompare(c) => {
            let (o, summaries) = run_init_compare(&setup(&c)?)?;
            for s in &summaries {
                println!(
                    "{:>8} mean MSE {:.6e} (rank {})",
                    s.scheme.name(),
                    s.mean_mse,
                    s.rank
                );
            }
            report(o)
        }
        Command::Efficiency(c) => {
            let (o, ratio) = run_efficiency(&setup(&c)?)?;
            if let Some(r) = ratio {
                println!(
                    "derivative-pass ratio {:.2}, wall-time ratio {:.2}",
                    r.pass_ratio, r.time_ratio
                );
            }
            report(o)
        }
        Command::Spectrum(c) => report(run_spectrum(&setup(&c)?)?),
        Command::Validate { seed, out } => {
            let v = run_validate(seed);
            for c in &v.checks {
                println!("{}", c.line());
            }
            if let Some(dir) = out {
                let prov = Provenance {
                    command: "validate".into(),
                    config_hash: "none".into(),
                    seed,
                };
                let mut od = OutputDir::create(&dir, prov)?;
                od.csv("validate.csv", v.to_report())?;
            }
            match v.failures() {
                0 => Ok(()),
                n => Err(HarnessError::ChecksFailed(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
