use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "sapg",
    about = "Regularisation-parameter estimation by stochastic approximation over proximal Langevin samplers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write trace artifacts.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Permit schedules that fail the convergence conditions
        /// (constant-step plateau studies).
        #[arg(long)]
        allow_constant_step: bool,
    },
    /// Check a power-law schedule's convergence conditions.
    ValidateSchedule {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        c: f64,
        /// Batch mode: increasing or fixed.
        #[arg(long)]
        mode: String,
    },
    /// Run a verification study and write its CSV report.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        /// Which study: drift, coupling, bias or plateau.
        #[arg(long)]
        which: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            allow_constant_step,
        } => sapg::cli::cmd_run(&config, seed, out.as_deref(), allow_constant_step),
        Command::ValidateSchedule { a, b, c, mode } => {
            sapg::cli::cmd_validate_schedule(a, b, c, &mode)
        }
        Command::Diagnose { config, which, out } => {
            sapg::cli::cmd_diagnose(&config, &which, out.as_deref())
        }
    };
    ExitCode::from(code as u8)
}
