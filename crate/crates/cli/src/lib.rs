//! Command-line front end: flat config files in, CSV tables out.

pub mod commands;
pub mod config;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CliError, Output, ScanKind};
use config::RunConfig;
use darkstate_core::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "darkstate", version, about = "Dark-resonance fluorescence of laser-driven ions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state excited population at one operating point.
    Steady {
        #[command(flatten)]
        common: Common,
        /// Also report every diagonal element of the density matrix.
        #[arg(long)]
        populations: bool,
    },
    /// Power, IR-detuning or threshold-slope scan.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = KindArg::Power)]
        kind: KindArg,
    },
    /// Fit the eight-level model to a measured spectrum.
    Fit {
        /// CSV with columns detuning_mhz, counts and optionally count_error.
        spectrum: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write data and fitted model side by side for plotting.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Synthetic IR spectrum with seeded multiplicative noise.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the `model` key.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Output CSV; stdout when absent and the config sets no `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Power,
    Detuning,
    Slope,
}

impl From<KindArg> for ScanKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Power => ScanKind::Power,
            KindArg::Detuning => ScanKind::Detuning,
            KindArg::Slope => ScanKind::Slope,
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(m) = common.model {
        cfg.model = match m {
            ModelArg::Four => ModelKind::FourLevel,
            ModelArg::Eight => ModelKind::EightLevel,
        };
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

/// Runs one command and returns the output together with the resolved
/// config (for its output path).
pub fn execute(cli: &Cli) -> Result<(Output, RunConfig), CliError> {
    match &cli.command {
        Command::Steady { common, populations } => {
            let mut cfg = resolve(common)?;
            cfg.populations |= *populations;
            Ok((commands::steady(&cfg)?, cfg))
        }
        Command::Scan { common, kind } => {
            let cfg = resolve(common)?;
            Ok((commands::scan(&cfg, (*kind).into())?, cfg))
        }
        Command::Fit { spectrum, common, curve } => {
            let cfg = resolve(common)?;
            let data = commands::load_spectrum(spectrum)?;
            Ok((commands::fit(&cfg, &data, curve.as_deref())?, cfg))
        }
        Command::Synth { common, seed } => {
            let mut cfg = resolve(common)?;
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            Ok((commands::synth(&cfg)?, cfg))
        }
    }
}
