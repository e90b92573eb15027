//! Experiment harness binary. Every subcommand reads one JSON config, prints
//! a report object (resolved config included) to stdout, and, when --out is
//! given, writes the same report plus CSV dumps into that directory.
//!
//! Exit codes: 0 success, 1 operational error (bad config, IO, parameters),
//! 2 existence-gate refusal, 3 a verification check that ran and failed.

mod artifacts;
mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spde_core::exec::Workers;
use spde_core::{Result, SpdeError};

use config::{CheckKind, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "spde",
    version,
    about = "Stochastic heat and wave equation laboratory: gate checks, Picard solves, norm verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json, resolved_config.json, and CSV dumps.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's replica count.
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Dalang integral of the configured model (or wave propagator) at beta.
    Upsilon(RunArgs),
    /// Existence gate: Upsilon(beta) < 1/(z_k lip_sigma)^2, strict.
    Gate(RunArgs),
    /// Smallest beta that passes the gate.
    Minbeta(RunArgs),
    /// Picard-solve the mild equation and dump the replica ensemble.
    Simulate(RunArgs),
    /// Statistical verification checks against the moment identities.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Which check to run; falls back to the config's "check" field.
        #[arg(long, value_enum)]
        check: Option<CheckKind>,
    },
    /// Linear-multiplier moment fixed point vs the Volterra oracle.
    Anderson(RunArgs),
    /// Wave-variant Picard solve with position/velocity measures.
    Wave(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Upsilon(_) => "upsilon",
            Command::Gate(_) => "gate",
            Command::Minbeta(_) => "minbeta",
            Command::Simulate(_) => "simulate",
            Command::Verify { .. } => "verify",
            Command::Anderson(_) => "anderson",
            Command::Wave(_) => "wave",
        }
    }

    fn run_args(&self) -> &RunArgs {
        match self {
            Command::Upsilon(r)
            | Command::Gate(r)
            | Command::Minbeta(r)
            | Command::Simulate(r)
            | Command::Anderson(r)
            | Command::Wave(r) => r,
            Command::Verify { run, .. } => run,
        }
    }
}

fn workers_from_env() -> Result<Workers> {
    match std::env::var("SPDE_WORKERS") {
        Err(_) => Workers::new(1),
        Ok(raw) => {
            let count: usize = raw.trim().parse().map_err(|_| {
                SpdeError::parameter(format!("SPDE_WORKERS must be a positive count, got {raw:?}"))
            })?;
            Workers::new(count)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let run = cli.command.run_args();
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(replicas) = run.replicas {
        cfg.replicas = replicas;
    }
    let workers = workers_from_env()?;
    if let Some(dir) = &run.out {
        fs::create_dir_all(dir).map_err(|e| {
            SpdeError::parameter(format!("cannot create {}: {e}", dir.display()))
        })?;
    }
    let out = run.out.as_deref();
    let (result, code) = match &cli.command {
        Command::Upsilon(_) => commands::run_upsilon(&cfg)?,
        Command::Gate(_) => commands::run_gate(&cfg)?,
        Command::Minbeta(_) => commands::run_minbeta(&cfg)?,
        Command::Simulate(_) => commands::run_simulate(&cfg, out, workers)?,
        Command::Verify { check, .. } => {
            let kind = check.or(cfg.check).ok_or_else(|| {
                SpdeError::parameter("verify needs --check or a \"check\" config field")
            })?;
            commands::run_verify(&cfg, kind, workers)?
        }
        Command::Anderson(_) => commands::run_anderson(&cfg, out, workers)?,
        Command::Wave(_) => commands::run_wave(&cfg, out, workers)?,
    };
    let report = json!({
        "command": cli.command.name(),
        "config": serde_json::to_value(&cfg)
            .map_err(|e| SpdeError::contract(format!("config encoding: {e}")))?,
        "exit_code": code,
        "result": result,
    });
    if let Some(dir) = &run.out {
        artifacts::write_json(&dir.join("report.json"), &report)?;
        artifacts::write_json(&dir.join("resolved_config.json"), &report["config"])?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report)
            .map_err(|e| SpdeError::contract(format!("report encoding: {e}")))?
    );
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                SpdeError::GateRefused { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
