//! Output files: provenance-stamped CSVs, image dumps and failure manifests.

use std::path::{Path, PathBuf};

use leakcheck_core::data::{write_pgm, write_report_csv, GrayImage, Report};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Setup;
use crate::error::{HarnessError, Result};

/// Command name, config hash and seed written at the top of every CSV.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, setup: &Setup) -> Self {
        Self {
            command: command.into(),
            config_hash: setup.config.hash(),
            seed: setup.config.seed,
        }
    }

    pub fn stamp(&self, report: &mut Report) {
        let mut lines = vec![
            format!("leakcheck {}", self.command),
            format!("config_sha256: {}", self.config_hash),
            format!("seed: {}", self.seed),
        ];
        lines.append(&mut report.comments);
        report.comments = lines;
    }
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, provenance: Provenance) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self {
            root: root.into(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn csv(&mut self, name: &str, mut report: Report) -> Result<PathBuf> {
        self.provenance.stamp(&mut report);
        let path = self.root.join(name);
        write_report_csv(&report, &path)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes a flattened image; the last shape axis is the width and all
    /// leading axes are stacked vertically.
    pub fn image(&mut self, name: &str, x: &[f64], shape: &[usize]) -> Result<PathBuf> {
        let width = shape.last().copied().unwrap_or(x.len()).max(1);
        let img = GrayImage::new(width, x.len() / width, x.to_vec())?;
        let dir = self.root.join("images");
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let path = dir.join(name);
        write_pgm(&img, &path)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes `failures.json` when any job failed.
    pub fn manifest(&mut self, failures: &[Failure]) -> Result<Option<PathBuf>> {
        if failures.is_empty() {
            return Ok(None);
        }
        let json = serde_json::to_string_pretty(failures).expect("failures serialize");
        self.text("failures.json", &json).map(Some)
    }
}

/// One failed job in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub job: usize,
    pub what: String,
    pub error: String,
}

/// Runs jobs on the rayon pool and returns results in job order.
pub fn run_jobs<J, T, F>(jobs: &[J], f: F) -> Vec<leakcheck_core::Result<T>>
where
    J: Sync,
    T: Send,
    F: Fn(usize, &J) -> leakcheck_core::Result<T> + Sync,
{
    jobs.par_iter().enumerate().map(|(i, j)| f(i, j)).collect()
}

/// Splits job results into successes and manifest entries.
pub fn partition<T>(
    results: Vec<leakcheck_core::Result<T>>,
    describe: impl Fn(usize) -> String,
) -> (Vec<(usize, T)>, Vec<Failure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(e) => failed.push(Failure {
                job: i,
                what: describe(i),
                error: e.to_string(),
            }),
        }
    }
    (ok, failed)
}
