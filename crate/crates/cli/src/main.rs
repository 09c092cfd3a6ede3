use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hamlab::config::{Command, Overrides};

/// Curvature invariants of monotone Hamiltonian systems.
///
/// Exit status: 0 on a completed run, 2 on a hypothesis violation, 1 on a
/// numerical failure or invalid input.
#[derive(Debug, Parser)]
#[command(name = "hamlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed, overriding `seeds.sampling`.
    #[arg(long)]
    seed: Option<u64>,
    /// Time span of the command, overriding its entry in `horizons`.
    #[arg(long)]
    horizon: Option<f64>,
    /// Riccati limit tolerance, overriding `tolerances.limit`.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the numerical-failure code; 2 means a hypothesis violation
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let overrides = Overrides { out: cli.out, seed: cli.seed, horizon: cli.horizon, tol: cli.tol };
    match hamlab::run_file(cli.command, &cli.config, &overrides) {
        Ok((outcome, report)) => {
            if let Some(e) = &report.error {
                eprintln!("hamlab: {e}");
            }
            println!("{} {}: {}", report.command, report.model.name(), report.status);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("hamlab: {e:#}");
            ExitCode::from(1)
        }
    }
}
