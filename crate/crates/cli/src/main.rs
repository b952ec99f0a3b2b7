//! `thermal-spectra`: run QVI, QML, lattice, oracle, sampling and comparison
//! pipelines from a TOML config and write their result files.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use crate::commands::RunError;
use crate::config::{Command, RunConfig};
use crate::output::OutputDir;

const THREADS_VAR: &str = "THERMAL_SPECTRA_THREADS";

#[derive(Parser)]
#[command(name = "thermal-spectra", version, about = "Spectra of 1-D Hamiltonians from thermal density matrices")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default runs/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-key override, e.g. --set qml.max_steps=1000. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        log::error!("{e}");
        return ExitCode::from(2);
    }
    let c = cli.common;
    let cfg = match RunConfig::load(cli.command, c.config.as_deref(), &c.set, c.seed, c.out)
        .and_then(|cfg| cfg.validate().map(|_| cfg))
    {
        Ok(cfg) => cfg,
        Err(e) => {
            log::error!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = cfg.out_dir();
    let mut out = match OutputDir::create(&dir, cfg.hash()) {
        Ok(o) => o,
        Err(e) => {
            log::error!("cannot create {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    };
    match commands::run(&cfg, &mut out) {
        Ok(()) => {
            log::info!("results in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            out.mark_partial();
            log::error!("{e}");
            match e {
                RunError::Config(_) => ExitCode::from(2),
                RunError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
