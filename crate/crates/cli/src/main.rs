mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::SharedArgs;

/// Entropy-gated frame prioritization harness.
#[derive(Debug, Parser)]
#[command(name = "entrogate", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline once and write metrics.json and ledger.csv.
    Run {
        #[command(flatten)]
        shared: SharedArgs,
        /// Disable entropy gating for this run.
        #[arg(long)]
        no_gating: bool,
    },
    /// Run the same stream gated and ungated and compare the two.
    Ablate {
        #[command(flatten)]
        shared: SharedArgs,
    },
    /// Write a synthetic scene as a raw luma sequence or, for .y4m, a Y4M file.
    Synth {
        #[command(flatten)]
        shared: SharedArgs,
        /// Destination file; a .y4m extension selects Y4M output.
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        output: PathBuf,
    },
    /// Summarize ledgers; two ledgers are also compared segment by segment.
    Stats {
        /// Ledger CSV files written by run or ablate.
        #[arg(required = true, value_name = "LEDGER")]
        ledgers: Vec<PathBuf>,
        /// Segments each ledger is split into for the paired tests.
        #[arg(long, value_name = "N")]
        segments: Option<usize>,
        /// Directory stats.json is written to.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (CliError::Usage(e) | CliError::Runtime(e)) = self;
        // Library errors already embed their causes; only append new text.
        let mut text = String::new();
        for cause in e.chain() {
            let msg = cause.to_string();
            if text.contains(&msg) {
                continue;
            }
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
        f.write_str(&text)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENTROGATE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { shared, no_gating } => commands::run(&shared, no_gating),
        Command::Ablate { shared } => commands::ablate(&shared),
        Command::Synth { shared, output } => commands::synth(&shared, &output),
        Command::Stats {
            ledgers,
            segments,
            out,
        } => commands::stats(&ledgers, segments, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
