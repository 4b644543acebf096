//! `grainfield` command-line front end.

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "grainfield", version, about = "Grain-boundary GMRF stress models")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation and sampling; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the linear algebra.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mesh and observations.
    Simulate,
    /// Run the MCMC sampler on a mesh and observation file.
    Fit,
    /// Goodness-of-fit report for a finished fit.
    Diagnose,
    /// Check a mesh file and print its boundary structure.
    ValidateMesh {
        /// Mesh file; defaults to `mesh` in the config.
        mesh: Option<PathBuf>,
    },
    /// Print a config file holding every default.
    Defaults,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ov = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &ov)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Diagnose => commands::diagnose(&cfg),
        Command::ValidateMesh { mesh } => {
            println!("{}", commands::validate_mesh(&cfg, mesh.as_deref())?);
            Ok(())
        }
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grainfield: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
