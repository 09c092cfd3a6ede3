//! Config-driven front end: one command per run, a JSON report and CSV
//! time series in the output directory.

pub mod commands;
pub mod config;
pub mod report;

use anyhow::{Context as _, Result};
use hamlab_core::HamError;

use crate::commands::{Context, Outcome};
use crate::config::{Command, RunConfig};
use crate::report::{write_json, Provenance, Report, RunOutcome, SCHEMA_VERSION};

/// Runs the configured command, writes its artifacts and returns the outcome.
/// `Err` is reserved for I/O failures; numerical and hypothesis failures are
/// recorded in the report.
pub fn run(cfg: &RunConfig) -> Result<(RunOutcome, Report)> {
    let command = cfg.command.context("no command given")?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;

    let attempt = cfg.model.build().and_then(|model| {
        let ctx = Context::new(cfg, &model)?;
        let base = ctx.base.z.as_slice().to_vec();
        commands::run(command, &ctx).map(|o| (o, base))
    });
    let (outcome, status, error, base, result) = match attempt {
        Ok((o, base)) => {
            let outcome = classify(&o);
            (outcome, o.status.clone(), None, Some(base), Some(o))
        }
        Err(e) => {
            let outcome = if e.is_hypothesis_violation() { RunOutcome::HypothesisViolation } else { RunOutcome::NumericalFailure };
            (outcome, status_of(&e).to_string(), Some(e.to_string()), None, None)
        }
    };
    let mut artifacts = Vec::new();
    let (value, notes) = match result {
        Some(o) => {
            for s in &o.series {
                s.write(dir)?;
                artifacts.push(s.file.clone());
            }
            (o.result, o.notes)
        }
        None => (serde_json::Value::Null, Vec::new()),
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: command.name().to_string(),
        model: cfg.model,
        energy: cfg.energy,
        base,
        outcome,
        status,
        error,
        provenance: Provenance::of(cfg),
        timestamp: chrono::Utc::now().to_rfc3339(),
        tolerances: cfg.tolerances.clone(),
        horizons: cfg.horizons.clone(),
        result: value,
        notes,
        artifacts,
    };
    write_json(&dir.join(&cfg.output.report), &report)?;
    Ok((outcome, report))
}

fn classify(o: &Outcome) -> RunOutcome {
    if o.hypothesis_violation {
        RunOutcome::HypothesisViolation
    } else if o.failed {
        RunOutcome::NumericalFailure
    } else {
        RunOutcome::Complete
    }
}

fn status_of(e: &HamError) -> &'static str {
    if e.is_hypothesis_violation() {
        "hypothesis_violation"
    } else {
        "numerical_failure"
    }
}

/// Loads `path`, applies the flags and runs.
pub fn run_file(command: Command, path: &std::path::Path, overrides: &config::Overrides) -> Result<(RunOutcome, Report)> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(command, overrides).with_context(|| format!("invalid config {}", path.display()))?;
    run(&cfg)
}
