use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wcnn_cli::{run, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "wcnn", version, about = "Weight-constrained network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON experiment document; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for metrics.csv, record.json and checkpoints/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Train each configured model and record learning curves.
    Train,
    /// Train a constrained model over an (N, r) grid, several seeds per cell.
    SweepNr,
    /// Pre-activation distribution divergence and spread versus (N, r).
    Express,
    /// FGSM accuracy over attack strengths and defense dropout rates.
    Attack,
    /// Hybrid circuit models on the linear and cubic boundary problems.
    Qdemo,
    /// Trainable variable counts per layer.
    Report,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Train => Command::Train,
            Sub::SweepNr => Command::SweepNr,
            Sub::Express => Command::Express,
            Sub::Attack => Command::Attack,
            Sub::Qdemo => Command::Qdemo,
            Sub::Report => Command::Report,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
    };
    let command = Command::from(cli.command);
    let result = ExperimentConfig::load(cli.config.as_deref(), &overrides).and_then(|c| run(command, &c));
    match result {
        Ok(record) => {
            println!(
                "{} finished: {} metric rows, config {} -> {}",
                record.command,
                record.metrics.len(),
                &record.config_hash[..12],
                record.config.out.join("metrics.csv").display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
