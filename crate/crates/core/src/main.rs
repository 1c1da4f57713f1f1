//! Command-line front end: load a run configuration, execute, write outputs.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;

use lidar_scatter::config::{load_config_with, Overrides, RunMode};
use lidar_scatter::runner::run;

/// Time-resolved lidar return of a stratified scattering medium: analytic
/// single/double-scattering signals and a Monte Carlo transport oracle.
#[derive(Debug, Parser)]
#[command(name = "lidar-scatter", version)]
struct Cli {
    /// Run configuration file (TOML; see docs/config-schema.toml).
    #[arg(long)]
    config: PathBuf,

    /// Override the run mode: single | double | mc | validate.
    #[arg(long)]
    mode: Option<String>,

    /// Output CSV path (a `.summary.txt` sibling is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,

    /// RNG seed override (default: `seed` from the config file, else 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo history count override (default: `mc.histories`, else 1000000).
    #[arg(long)]
    histories: Option<u64>,

    /// Exit with a nonzero status when any validity diagnostic is violated
    /// (far-field check fails or the smallness parameter exceeds its
    /// threshold).
    #[arg(long)]
    strict: bool,

    /// Write a structured trajectory log (JSON lines) to this path.
    /// Debug aid: the log grows with every transport event.
    #[arg(long)]
    log_trajectories: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode = match cli.mode.as_deref().map(RunMode::from_str).transpose() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: --mode: {e}");
            return ExitCode::from(1);
        }
    };
    let overrides = Overrides {
        mode,
        seed: cli.seed,
        histories: cli.histories,
        out: cli.out,
        strict: cli.strict,
        log_trajectories: cli.log_trajectories,
    };
    let config = match load_config_with(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&config) {
        Ok(output) => {
            print!("{}", output.summary);
            if config.strict && output.regime_violation {
                eprintln!("error: validity diagnostics violated (strict mode)");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
