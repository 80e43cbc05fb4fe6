//! `selmi`: impute MNAR outcomes with selection-model methods, run Monte
//! Carlo method comparisons, validate estimates against later reports and
//! render metric tables.
//!
//! Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure. Diagnostics go to stderr; stdout carries one summary line.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::JobConfig;
use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "selmi", version, about = "Selection-model imputation for outcomes missing not at random")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Impute a dataset's missing outcomes and write estimates with intervals.
    Impute,
    /// Run the Monte Carlo comparison of methods.
    Simulate,
    /// Compare imputed estimates with later-reported values.
    Validate,
    /// Render simulation metric tables as Markdown.
    Report,
}

/// Flags that override the job file.
#[derive(Debug, Args)]
struct Overrides {
    /// Job file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Keep per-replication records.
    #[arg(long, global = true)]
    keep_raw: bool,
    /// Method to run (repeatable); replaces the configured list.
    #[arg(long = "method", global = true, value_name = "NAME")]
    methods: Vec<String>,
}

fn resolve(overrides: Overrides) -> Result<JobConfig, Failure> {
    let mut cfg = match &overrides.config {
        Some(path) => JobConfig::load(path)?,
        None => JobConfig::default(),
    };
    if overrides.seed.is_some() {
        cfg.seed = overrides.seed;
    }
    if overrides.threads.is_some() {
        cfg.threads = overrides.threads;
    }
    if overrides.out.is_some() {
        cfg.out = overrides.out;
    }
    cfg.keep_raw |= overrides.keep_raw;
    if !overrides.methods.is_empty() {
        cfg.methods.names = overrides.methods;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let outcome = resolve(cli.overrides).and_then(|cfg| match cli.command {
        Command::Impute => commands::impute::run(&cfg),
        Command::Simulate => commands::simulate::run(&cfg),
        Command::Validate => commands::validate::run(&cfg),
        Command::Report => commands::report::run(&cfg),
    });
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("selmi: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
