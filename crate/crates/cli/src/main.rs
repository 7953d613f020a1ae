//! `stratevo`: launch, resume and inspect runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stratevo_core::engine::{self, ResumeOutcome, RunOptions};
use stratevo_core::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "stratevo", version, about = "Strategy-aware evolutionary program search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start a new run.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Continue an interrupted run.
    Resume {
        #[arg(long)]
        run_dir: PathBuf,
        /// Refuse to resume unless this config matches the run's.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summarize a run; never modifies the run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        /// Also write a key,value CSV summary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write strategy embeddings with cluster labels as CSV.
    ExportEmbeddings {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config file and print it with defaults filled in.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;

fn load_config(path: &Path) -> Result<RunConfig, ExitCode> {
    RunConfig::load(path).map_err(|errors| {
        eprintln!("invalid config {}:", path.display());
        for e in &errors.0 {
            eprintln!("  {e}");
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn print_report(run_dir: &Path) -> Result<()> {
    let report = engine::report(run_dir).context("building report")?;
    println!("{report}");
    Ok(())
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, run_dir } => {
            let config = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let run_dir = run_dir.unwrap_or_else(|| config.output_dir.clone());
            let result = engine::run(&config, &run_dir, RunOptions::default())?;
            eprintln!(
                "finished {} generations; best fitness {}",
                result.generations_completed, result.best.fitness
            );
            print_report(&run_dir)?;
        }
        Command::Resume { run_dir, config } => {
            let expected = match config.as_deref().map(load_config).transpose() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            match engine::resume(&run_dir, expected.as_ref(), None, RunOptions::default())? {
                ResumeOutcome::AlreadyComplete(summary) => {
                    println!(
                        "run already complete ({} generations, best fitness {}); nothing to do",
                        summary.generations, summary.best_fitness
                    );
                }
                ResumeOutcome::Ran(result) => {
                    eprintln!(
                        "resumed to generation {}; best fitness {}",
                        result.generations_completed, result.best.fitness
                    );
                    print_report(&run_dir)?;
                }
            }
        }
        Command::Report { run_dir, out } => {
            let report = engine::report(&run_dir)?;
            println!("{report}");
            if let Some(out) = out {
                let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
                report.write_csv(file)?;
            }
        }
        Command::ExportEmbeddings { run_dir, out } => {
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let rows = engine::export_embeddings(&run_dir, file)?;
            println!("wrote {rows} embeddings to {}", out.display());
        }
        Command::ValidateConfig { config } => {
            let config = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            println!("{}", serde_json::to_string_pretty(&config)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
