use std::path::Path;

use anyhow::{Context, Result};
use hamlab_core::ModelSpec;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Complete,
    HypothesisViolation,
    NumericalFailure,
}

impl RunOutcome {
    pub fn exit_code(self) -> i32 {
        match self {
            RunOutcome::Complete => 0,
            RunOutcome::NumericalFailure => 1,
            RunOutcome::HypothesisViolation => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    /// SHA-256 of the effective configuration, output paths excluded.
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            config_sha256: hex::encode(Sha256::digest(cfg.canonical().as_bytes())),
            seed: cfg.seeds.sampling,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// JSON report. Everything except `timestamp` is a function of the
/// effective configuration.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub model: ModelSpec,
    pub energy: Option<f64>,
    pub base: Option<Vec<f64>>,
    pub outcome: RunOutcome,
    /// Command verdict, e.g. `anosov` or `pass`.
    pub status: String,
    pub error: Option<String>,
    pub provenance: Provenance,
    pub timestamp: String,
    pub tolerances: Tolerances,
    pub horizons: crate::config::Horizons,
    pub result: Value,
    pub notes: Vec<String>,
    /// File names of the CSV series, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Time series with a header row: `t` (or `s`), then values.
#[derive(Debug, Clone)]
pub struct Series {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(file: &str, columns: Vec<String>) -> Self {
        Self { file: file.to_string(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(&self.file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
        w.write_record(&self.columns).with_context(|| format!("cannot write {}", path.display()))?;
        for row in &self.rows {
            // NaN marks an undefined value, written as an empty cell
            let cells = row.iter().map(|v| if v.is_nan() { String::new() } else { format!("{v:e}") });
            w.write_record(cells).with_context(|| format!("cannot write {}", path.display()))?;
        }
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

pub fn write_json(path: &Path, report: &Report) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
