//! Command-line front end of the simulator: configuration loading, the
//! `simulate`, `figure`, `report` and `sweep` commands, and their CSV/SVG
//! outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use spdc_core::RunConfig;

mod commands;
pub mod io;
pub mod plot;

pub use commands::{figure, report, simulate, sweep};

/// Process exit code for a configuration error.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for a numerical failure.
pub const EXIT_NUMERICAL: i32 = 3;

/// A failed command, classified by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Numerical(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<spdc_core::Error> for Failure {
    fn from(e: spdc_core::Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Numerical(format!("csv: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Fig2,
    Fig3,
    Fig4,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Joint momentum and position distributions with their rotated sections.
    Simulate,
    /// Data and plot behind one of the figures.
    Figure {
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Both slit-scan measurements, fits and the separability verdict.
    Report,
    /// Coherence sweep over the configured phase-screen strengths.
    Sweep,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "spdc-sim",
    version,
    about = "SPDC photon-pair simulator with a tunable-coherence pump"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed (overrides `pump.seed`).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

/// Reads the configuration named on the command line and applies the flag
/// overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.pump.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the parsed command and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, Failure> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Failure::io(&cfg.output.dir, e))?;
    match cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Figure { which } => figure(&cfg, which),
        Command::Report => report(&cfg),
        Command::Sweep => sweep(&cfg),
    }
}
