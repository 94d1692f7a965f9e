mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracbubble::Error;

use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "fracbubble", version, about = "Green functions, reduced energies and bubble constructions")]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces every tolerance of the configuration.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resolve the constants with their oracle residuals.
    Constants,
    /// Green function table on the configured domain.
    Green,
    /// Robin function from the center toward the boundary.
    Robin,
    /// Reduced energy on a (ξ, Λ) grid.
    PsiScan,
    /// Critical points of the reduced energy and their stability.
    FindCritical,
    /// Solve the reduced problem for every ε and write the solutions.
    Ansatz,
    /// Run the acceptance suite; exit 4 when a criterion fails.
    Verify,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Capability(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { out: cli.out, threads: cli.threads, tol: cli.tol, seed: cli.seed };
    let cfg = match ExperimentConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cfg.run.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    let result = match cli.command {
        Command::Constants => commands::cmd_constants(&cfg),
        Command::Green => commands::cmd_green(&cfg),
        Command::Robin => commands::cmd_robin(&cfg),
        Command::PsiScan => commands::cmd_psi_scan(&cfg),
        Command::FindCritical => commands::cmd_find_critical(&cfg),
        Command::Ansatz => commands::cmd_ansatz(&cfg),
        Command::Verify => commands::cmd_verify(&cfg),
    };
    match result {
        Ok(o) if o.accepted => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_ACCEPTANCE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
