//! `rmlab`: command-line driver for the plate studies.
//!
//! Exit codes: 0 success, 1 a scientific check failed, 2 usage or
//! configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;
use output::RunDir;

/// Thread count for the parallel sweeps.
const THREADS_VAR: &str = "RMLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output directory is locked by another run ({0}); remove the file if no run is active")]
    Locked(PathBuf),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Config(_) | CliError::Locked(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rmlab", version, about = "Thin-plate energy studies: recovery sweeps, minimizer comparison, rigidity diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that override keys of the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// Comma-separated thicknesses; fractions such as 1/8 are accepted.
    #[arg(long, global = true)]
    h_list: Option<String>,
    /// enforce or ignore.
    #[arg(long, global = true)]
    bc_mode: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the structural assumptions on the energy densities.
    CheckMaterial,
    /// Dump the finite-difference Hessian forms next to their closed forms.
    Qforms,
    /// Recovery-sequence energies against the limit functional over h_list.
    GammaStudy,
    /// Minimize the rescaled, loaded 3D energy for each thickness.
    Minimize3d,
    /// Minimize the loaded limit functional.
    MinimizeLimit,
    /// Compare rescaled 3D minima with the limit minimum.
    Compare,
    /// Rigidity diagnostics of rigid, recovery or perturbed fields.
    Rigidity,
}

fn load_config(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = &o.sigma {
        cfg.set("sigma", v)?;
    }
    if let Some(v) = &o.h_list {
        cfg.set("h_list", v)?;
    }
    if let Some(v) = &o.bc_mode {
        cfg.set("bc_mode", v)?;
    }
    if let Some(v) = &o.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let cfg = load_config(&cli.overrides)?;
    let out = RunDir::acquire(&cfg.out, cfg.hash())?;
    match cli.command {
        Command::CheckMaterial => commands::check_material(&cfg, &out),
        Command::Qforms => commands::qforms(&cfg, &out),
        Command::GammaStudy => commands::gamma(&cfg, &out),
        Command::Minimize3d => commands::minimize3d(&cfg, &out),
        Command::MinimizeLimit => commands::minimize_limit(&cfg, &out),
        Command::Compare => commands::compare(&cfg, &out),
        Command::Rigidity => commands::rigidity(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
