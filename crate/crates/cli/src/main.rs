//! `dynperc` command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynperc::verify::VerifyOptions;

use crate::commands::Outcome;
use crate::config::{load, ConfigError, RevealmentConfig, SimulateConfig, SpectrumConfig, TreeExactConfig};

#[derive(Debug, Parser)]
#[command(
    name = "dynperc",
    version,
    about = "Dynamical percolation: exact spectra, simulation and query plans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (rayon default when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form tree table: variance, tau, tau per bit, limit ratio.
    TreeExact,
    /// Exact spectral weights and autocorrelations by enumeration.
    Spectrum,
    /// Simulate the discrete-time chain and estimate autocorrelations.
    Simulate,
    /// Revealment and predictability of a query plan.
    Revealment,
    /// Run the acceptance criteria.
    Verify,
}

const EXIT_NUMERIC: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let config = cli.config.as_deref();
    let require = || -> anyhow::Result<()> {
        if config.is_none() {
            return Err(config::config_error("--config is required for this command"));
        }
        Ok(())
    };
    match cli.command {
        Command::TreeExact => {
            require()?;
            let mut c: TreeExactConfig = load(config)?;
            c.seed = cli.seed.or(c.seed);
            commands::tree_exact(&c, &cli.out)
        }
        Command::Spectrum => {
            require()?;
            let mut c: SpectrumConfig = load(config)?;
            c.seed = cli.seed.or(c.seed);
            commands::spectrum(&c, &cli.out)
        }
        Command::Simulate => {
            require()?;
            let mut c: SimulateConfig = load(config)?;
            c.seed = cli.seed.or(c.seed);
            commands::simulate(&c, &cli.out)
        }
        Command::Revealment => {
            require()?;
            let mut c: RevealmentConfig = load(config)?;
            c.seed = cli.seed.or(c.seed);
            commands::revealment(&c, &cli.out)
        }
        Command::Verify => {
            let mut c: VerifyOptions = load(config)?;
            if let Some(seed) = cli.seed {
                c.seed = seed;
            }
            commands::verify(&c, &cli.out)
        }
    }
}

/// Numeric trouble exits 1; everything else is a problem with the inputs.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<dynperc::Error>() {
        Some(
            dynperc::Error::WindowNotClosed { .. }
            | dynperc::Error::SeriesTooShort { .. }
            | dynperc::Error::Domain { .. },
        ) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("global pool is configured once");
    }
    match run(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NumericFailure) => ExitCode::from(EXIT_NUMERIC),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
