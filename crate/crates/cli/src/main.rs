//! `selfcons-gp`: experiment runner for the self-consistent GP library.
//!
//! Subcommands: `run <config.toml>`, `validate <config.toml>`,
//! `report <results-dir>`. Exit codes: 2 on schema violations, 3 on
//! solver non-convergence (partial outputs are kept), 4 on numerical
//! divergence.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "selfcons-gp", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute an experiment config and write results + manifest.
    Run { config: PathBuf },
    /// Check a config against the schema without running it.
    Validate { config: PathBuf },
    /// Summarize a results directory from its manifest (no recompute).
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(_) => {
                println!("ok: {} is a valid experiment config", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid config: {e}");
                ExitCode::from(2)
            }
        },
        Cmd::Run { config } => {
            let (cfg, raw) = match ExperimentConfig::load(&config) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return ExitCode::from(2);
                }
            };
            match runner::run(&cfg, &raw) {
                Ok((outcome, dir)) => {
                    println!("results: {}", dir.display());
                    let code = outcome.exit_code();
                    if code != 0 {
                        eprintln!("run finished with outcome {outcome:?} (exit {code})");
                    }
                    ExitCode::from(code as u8)
                }
                Err(e) => {
                    // map core numerical errors onto the documented codes
                    let code = if e
                        .downcast_ref::<selfcons_gp::Error>()
                        .map(|err| matches!(err, selfcons_gp::Error::LangevinDiverged { .. }))
                        .unwrap_or(false)
                    {
                        4
                    } else if e.downcast_ref::<ConfigError>().is_some() {
                        2
                    } else {
                        1
                    };
                    eprintln!("error: {e:#}");
                    ExitCode::from(code)
                }
            }
        }
        Cmd::Report { dir } => match runner::report(&dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
