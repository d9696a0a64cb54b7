mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Audit rating graphs for disagreement structure and train predictors of it.
#[derive(Debug, Parser)]
#[command(name = "qoe-audit", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "qoe-out")]
    out: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Dotted config override, e.g. `--set bootstrap.n_resamples=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Gen,
    /// Per-group Q-vectors for the configured contract set.
    Audit,
    /// Between-view drift with bootstrap intervals.
    Drift,
    /// Train and evaluate the configured models over the split grid.
    Train,
    /// Graph-level difficulty over families, fractions and seeds.
    Difficulty,
    /// Q_total spread within MOS bins.
    BinGain,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Audit => "audit",
            Command::Drift => "drift",
            Command::Train => "train",
            Command::Difficulty => "difficulty",
            Command::BinGain => "bin-gain",
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let ctx = Ctx {
        cfg,
        out: cli.out.clone(),
        jobs: cli.jobs,
    };
    match cli.command {
        Command::Gen => commands::gen(&ctx),
        Command::Audit => commands::audit(&ctx),
        Command::Drift => commands::drift(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Difficulty => commands::difficulty(&ctx),
        Command::BinGain => commands::bin_gain_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qoe-audit {}: error: {e}", cli.command.name());
            if std::fs::create_dir_all(&cli.out).is_ok() {
                let path = cli.out.join("error.txt");
                if output::write_atomic(&path, format!("{e}\n").as_bytes()).is_ok() {
                    eprintln!("details written to {}", path.display());
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
