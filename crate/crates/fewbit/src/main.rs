use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fewbit::commands::{cmd_capacity_sweep, cmd_code, cmd_gray, cmd_hybrid_sim, cmd_regions, RunOptions};
use fewbit::config::{load, GrayConfig};
use fewbit::error::CliError;

#[derive(Parser)]
#[command(name = "fewbit", version, about = "Few-bit ADC receivers with analog nonlinearities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config for the subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path (tables go to stdout otherwise)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail with exit status 4 if any capacity point did not converge
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Partition, associated code and property report of a scalar quantizer
    Code,
    /// Achievable-rate curves over SNR
    CapacitySweep,
    /// Region census of a multi-dimensional quantizer
    Regions,
    /// Balanced cyclic Gray code
    Gray {
        /// Number of bits (overrides the config)
        #[arg(long)]
        n: Option<usize>,
    },
    /// Monte Carlo rates of the sign-plus-magnitude quantizer
    HybridSim,
}

fn config_path(cli: &Cli) -> Result<&PathBuf, CliError> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::invalid("--config is required"))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        strict: cli.strict,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let res = match &cli.command {
        Command::Code => cmd_code(&load(config_path(cli)?)?, &opts, &mut out),
        Command::CapacitySweep => cmd_capacity_sweep(&load(config_path(cli)?)?, &opts, &mut out),
        Command::Regions => cmd_regions(&load(config_path(cli)?)?, &opts, &mut out),
        Command::Gray { n } => {
            let cfg = match (n, &cli.config) {
                (Some(n), _) => GrayConfig { n: *n },
                (None, Some(p)) => load(p)?,
                (None, None) => return Err(CliError::invalid("give --n or --config")),
            };
            cmd_gray(&cfg, &opts, &mut out)
        }
        Command::HybridSim => cmd_hybrid_sim(&load(config_path(cli)?)?, &opts, &mut out),
    };
    out.flush()?;
    res
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("fewbit: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fewbit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
