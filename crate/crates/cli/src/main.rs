//! `rebasin`: train MLPs, align them by hidden-unit permutation, measure
//! interpolation barriers and merge many models. JSON goes to stdout, logs to
//! stderr.

mod commands;
mod data;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::data::DataArgs;

#[derive(Debug, Parser)]
#[command(name = "rebasin", version, about = "Permutation alignment and merging of MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Weight,
    Activation,
    Ste,
    Greedy,
    Correlation,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an MLP and write an RBSN checkpoint
    Train {
        /// `key = value` training config; defaults apply to missing keys
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Find π so that π(B) lines up with A; write π and π(B)
    Align {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "weight")]
        method: Method,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// STE optimizer steps
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Permutation text file
        #[arg(long)]
        perm_out: PathBuf,
        /// Aligned checkpoint π(B)
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Loss and accuracy along the line from A to B, plus barriers
    InterpBarrier {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = rebasin_core::eval::DEFAULT_NUM_POINTS)]
        points: usize,
        /// Curve CSV
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Align N models to each other and average them
    MergeMany {
        #[arg(required = true, num_args = 2..)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Error curves of the two-network counterexample under every permutation
    Counterexample {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = rebasin_core::eval::DEFAULT_NUM_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let report = match cli.command {
        Command::Train { config, data, seed, out } => commands::train(config.as_deref(), &data, seed, &out)?,
        Command::Align {
            a,
            b,
            method,
            data,
            seed,
            steps,
            perm_out,
            out,
        } => commands::align(&a, &b, method, &data, seed, steps, &perm_out, &out)?,
        Command::InterpBarrier { a, b, data, points, out } => commands::interp_barrier(&a, &b, &data, points, &out)?,
        Command::MergeMany { models, data, seed, out } => commands::merge_many(&models, &data, seed, &out)?,
        Command::Counterexample {
            samples,
            points,
            seed,
            out,
        } => commands::counterexample(samples, points, seed, &out)?,
    };
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&report.json)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    Ok(report.ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
