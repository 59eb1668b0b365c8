//! `nkrr`: surface reconstruction from point clouds with a tuned Nyström KRR
//! occupancy field.
//!
//! Exit codes: 0 success, 1 configuration, 2 I/O or file format, 3 numerical failure.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "nkrr", version, about = "Occupancy reconstruction with tuned Nyström kernel ridge regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the field, mesh it, and write mesh.obj, mesh.ply, model.json and tune_trace.csv.
    Reconstruct(Overrides),
    /// Write queries.fx and manifest.json for an external feature extractor.
    ExportQueries(Overrides),
    /// Compare --input against --reference and write metrics.json.
    Eval(Overrides),
    /// Fit and tune without meshing.
    TuneOnly(Overrides),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (flags, cmd): (&Overrides, fn(&RunConfig) -> Result<(), CliError>) = match &cli.command {
        Command::Reconstruct(f) => (f, commands::cmd_reconstruct),
        Command::ExportQueries(f) => (f, commands::cmd_export_queries),
        Command::Eval(f) => (f, commands::cmd_eval),
        Command::TuneOnly(f) => (f, commands::cmd_tune_only),
    };
    cmd(&RunConfig::resolve(flags)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
