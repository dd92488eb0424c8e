use clap::{Parser, Subcommand};
use labelcrew_cli::commands;
use labelcrew_core::eval::DEFAULT_PERMUTATION_RESAMPLES;
use std::path::PathBuf;

/// Multi-agent text annotation: scripted or live LLM annotators, cost
/// ledgers, and paired significance reports.
#[derive(Parser)]
#[command(name = "labelcrew", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset against its task definition.
    Validate {
        /// Task JSON file.
        #[arg(long)]
        task: PathBuf,
        /// Dataset JSONL file.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run an annotation manifest to completion; safe to re-run to resume.
    Annotate {
        /// Run manifest (TOML or JSON).
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score completed runs, optionally against a baseline run.
    Evaluate {
        /// Run directories produced by `annotate`.
        #[arg(long = "runs", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// run_id of the comparison baseline (must be among --runs).
        #[arg(long)]
        baseline: Option<String>,
        /// Where results.csv / results.json / summary.csv land.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Seed for the permutation test.
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Resamples for the permutation test.
        #[arg(long, default_value_t = DEFAULT_PERMUTATION_RESAMPLES)]
        resamples: u32,
    },
    /// Cost-effectiveness table and discussion round curves.
    Report {
        /// Run directories; each needs a prior `evaluate`.
        #[arg(long = "runs", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Where the report CSVs land.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { task, dataset } => commands::cmd_validate(&task, &dataset),
        Command::Annotate { manifest } => commands::cmd_annotate(&manifest),
        Command::Evaluate { runs, baseline, out, seed, resamples } => {
            commands::cmd_evaluate(&runs, baseline.as_deref(), &out, seed, resamples)
        }
        Command::Report { runs, out } => commands::cmd_report(&runs, &out),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
