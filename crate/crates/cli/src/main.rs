use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sisr_cli::{cmd_evaluate, cmd_filter, cmd_impute, cmd_simulate, load_config, CmdError};

/// Simulate, filter, evaluate, and impute latent time series observed
/// through a multiplicative gamma-noise channel.
#[derive(Parser)]
#[command(name = "sisr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate latent states and observations from a model configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the particle filter over an observation file.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// Observation CSV (`t,z`).
        #[arg(long)]
        observations: PathBuf,
        /// Optional latent truth CSV (`t,x`); adds RMSE columns.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Attach a Monte Carlo fitness estimate to the report metadata.
        #[arg(long)]
        fitness: bool,
    },
    /// Aggregate report files into a per-model summary table.
    Evaluate {
        /// Report CSV files (each with its `.json` sidecar alongside).
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the summary as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill missing dataset cells with filter estimates.
    Impute {
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV: label header, one row per step, empty cell = missing.
        #[arg(long)]
        data: PathBuf,
        /// Optional latent truth CSV in the same layout; adds masked-cell
        /// RMSE to the report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let config = load_config(&config, seed)?;
            let files = cmd_simulate(&config, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Filter {
            config,
            observations,
            truth,
            seed,
            out,
            fitness,
        } => {
            let config = load_config(&config, seed)?;
            let files = cmd_filter(&config, &observations, truth.as_deref(), &out, fitness)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Evaluate { reports, out } => {
            let table = cmd_evaluate(&reports, out.as_deref())?;
            print!("{table}");
        }
        Command::Impute {
            config,
            data,
            truth,
            seed,
            out,
        } => {
            let config = load_config(&config, seed)?;
            let files = cmd_impute(&config, &data, truth.as_deref(), &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
