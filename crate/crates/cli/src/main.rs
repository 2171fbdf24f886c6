//! `isrisk`: importance-sampling risk estimation, rate calculators,
//! assumption audits and Monte Carlo experiments driven by a TOML file.

mod commands;
mod config;
mod error;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isrisk_core::parallel::Execution;

use crate::commands::Outcome;
use crate::config::{
    Format, RunConfig, AUDIT_KEYS, COMMON_KEYS, COMPARE_KEYS, ESTIMATE_KEYS, EXPERIMENT_KEYS, RATE_KEYS,
};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "isrisk",
    version,
    about = "Importance-sampling estimation of tail risk and its moderate-deviation efficiency"
)]
#[command(after_help = COMMON_KEYS)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the configuration seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for replications; 1 runs sequentially.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Point estimate from one weighted sample, with its MDP half-width.
    #[command(after_help = format!("{ESTIMATE_KEYS}\n\n{COMMON_KEYS}"))]
    Estimate,
    /// Shortfall variances, kappa constants and shortfall rate values.
    #[command(after_help = format!("{RATE_KEYS}\n\n{COMMON_KEYS}"))]
    Rate,
    /// Growth condition, scheme feasibility and tail assumptions.
    #[command(after_help = format!("{AUDIT_KEYS}\n\n{COMMON_KEYS}"))]
    Audit,
    /// Replicated error and deviation-probability study over an n grid.
    #[command(after_help = format!("{EXPERIMENT_KEYS}\n\n{COMMON_KEYS}"))]
    Experiment,
    /// Ranks sampling distributions by asymptotic variance.
    #[command(after_help = format!("{COMPARE_KEYS}\n\n{COMMON_KEYS}"))]
    Compare,
}

fn execute(cli: &Cli, cfg: &RunConfig, exec: Execution) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Estimate => commands::estimate(cfg),
        Command::Rate => commands::rate(cfg),
        Command::Audit => commands::audit_cmd(cfg),
        Command::Experiment => commands::experiment(cfg, exec),
        Command::Compare => commands::compare(cfg, exec),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let format = cli.format.or(cfg.format).unwrap_or_default();
    let out = cli.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from));

    let outcome = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers must be positive".into())),
        Some(1) => execute(&cli, &cfg, Execution::Sequential)?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| execute(&cli, &cfg, Execution::Parallel))?,
        None => execute(&cli, &cfg, Execution::Parallel)?,
    };

    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(&p)?);
            outcome.table.write(format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            outcome.table.write(format, &mut w)?;
        }
    }
    outcome.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isrisk: {e}");
            e.exit_code()
        }
    }
}
