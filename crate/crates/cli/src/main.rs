//! `uinv`: closed forms, exact protocol simulation, spanning-set diagnostics
//! and SDP optimization of universal unitary inversion.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::{OptimizeExtras, Outcome, TableFilter};
use config::{Format, Overrides, RunConfig};
use error::CliError;
use output::{render, Report, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "uinv",
    version,
    about = "Universal unitary inversion: formulas, simulation and SDP bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Qudit dimension.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Number of uses of the unitary.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// parallel, adaptive or ico.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Solver residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    max_iter: Option<usize>,
    /// json or csv.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// TOML file with any of the above (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fill in wall_time (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form success probability, parallel bound and minimum-uses verdict.
    Formula,
    /// Runs the exact adaptive protocol on Haar-random unitaries.
    Simulate,
    /// Solves the inversion SDP for one mode, or the reference table.
    Optimize(OptimizeArgs),
    /// Rank and saturation of the sampled spanning set.
    Span,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// Run the reference grid instead of a single instance.
    #[arg(long)]
    table1: bool,
    /// With --table1: also run the slow cells.
    #[arg(long, requires = "table1")]
    extended: bool,
    /// Write the assembled standard-form program to PATH.
    #[arg(long = "export-program", value_name = "PATH")]
    export_program: Option<PathBuf>,
    /// Write S and C to PREFIX.S.txt and PREFIX.C.txt.
    #[arg(long, value_name = "PREFIX")]
    dump: Option<PathBuf>,
    /// Exit with status 2 unless the solver reports optimal.
    #[arg(long)]
    strict: bool,
}

fn emit<T: Serialize>(
    command: &str,
    cfg: &RunConfig,
    outcome: Outcome<T>,
    started: Option<Instant>,
) -> Result<(), CliError> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command,
        config: cfg,
        result: outcome.result,
        wall_time: started.map(|t| t.elapsed().as_secs_f64()),
    };
    print!("{}", render(&report, cfg.format)?);
    match outcome.failure {
        Some(msg) => Err(CliError::Tolerance(msg)),
        None => Ok(()),
    }
}

fn ok<T>(result: T) -> Outcome<T> {
    Outcome { result, failure: None }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let file = c.config.as_deref().map(Overrides::from_file).transpose()?;
    let flags = Overrides {
        d: c.d,
        k: c.k,
        mode: c.mode.clone(),
        seed: c.seed,
        trials: c.trials,
        tol: c.tol,
        max_iter: c.max_iter,
        format: c.format,
        ..Default::default()
    };
    let filter_mode = c.mode.clone().or(file.as_ref().and_then(|f| f.mode.clone()));
    let cfg = RunConfig::resolve(file, flags, &|name| std::env::var(name).ok())?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let started = c.timing.then(Instant::now);
    match &cli.command {
        Command::Formula => emit("formula", &cfg, ok(commands::formula(&cfg)), started),
        Command::Simulate => emit("simulate", &cfg, commands::simulate(&cfg)?, started),
        Command::Span => emit("span", &cfg, ok(commands::span(&cfg)?), started),
        Command::Optimize(args) if args.table1 => {
            let filter = TableFilter {
                d: c.d,
                k: c.k,
                mode: filter_mode.map(|_| cfg.comb_mode()).transpose()?,
                extended: args.extended,
            };
            let outcome = commands::table1(&cfg, &filter, c.timing)?;
            emit("optimize-table1", &cfg, outcome, started)
        }
        Command::Optimize(args) => {
            let extras = OptimizeExtras {
                export_program: args.export_program.clone(),
                dump_prefix: args.dump.clone(),
                strict: args.strict,
            };
            emit("optimize", &cfg, commands::optimize(&cfg, &extras)?, started)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uinv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
