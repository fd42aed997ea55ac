use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "lafte",
    version,
    about = "IV estimation, mover diagnostics and bounds for two-part treatments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    Estimate,
    Diagnose,
    Bounds,
    Simulate,
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First stages, reduced form, IV estimands for every treatment
    /// definition and complier shares.
    Estimate(Overrides),
    /// Two-step mover test and the double exclusion sign check.
    Diagnose(Overrides),
    /// Mover diagnostics followed by the three bound pairs.
    Bounds(Overrides),
    /// Draw a dataset from a population spec and write its true
    /// parameters alongside.
    Simulate(Overrides),
    /// Check every identification identity on a population spec.
    Verify(Overrides),
}

impl Command {
    pub fn split(self) -> (CommandKind, Overrides) {
        match self {
            Command::Estimate(o) => (CommandKind::Estimate, o),
            Command::Diagnose(o) => (CommandKind::Diagnose, o),
            Command::Bounds(o) => (CommandKind::Bounds, o),
            Command::Simulate(o) => (CommandKind::Simulate, o),
            Command::Verify(o) => (CommandKind::Verify, o),
        }
    }
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Estimate => "estimate",
            CommandKind::Diagnose => "diagnose",
            CommandKind::Bounds => "bounds",
            CommandKind::Simulate => "simulate",
            CommandKind::Verify => "verify",
        }
    }

    pub fn needs_data(self) -> bool {
        matches!(self, CommandKind::Estimate | CommandKind::Diagnose | CommandKind::Bounds)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Structured,
}

/// Flags that override the matching keys of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Delimited input file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Cluster column.
    #[arg(long)]
    pub cluster: Option<String>,
    /// Comma-separated control columns.
    #[arg(long, value_delimiter = ',')]
    pub controls: Option<Vec<String>>,
    /// Significance level of the tests.
    #[arg(long)]
    pub level: Option<f64>,
    /// Lower response limit for the bounded-response bounds.
    #[arg(long, allow_hyphen_values = true)]
    pub ymin: Option<f64>,
    /// Upper response limit for the bounded-response bounds.
    #[arg(long, allow_hyphen_values = true)]
    pub ymax: Option<f64>,
    /// Rows to simulate.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file; for `simulate`, the dataset file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Population spec (TOML) for `simulate` and `verify`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}
