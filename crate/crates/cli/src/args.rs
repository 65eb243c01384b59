use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{CouplingName, ExperimentConfig, Format, RepairFrom, SchemeName};
use crate::grid::{parse_grid, GridError};

/// A parsed `--R-grid` / `--N-grid` value.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn grid_arg(s: &str) -> Result<Grid, GridError> {
    parse_grid(s).map(Grid)
}

#[derive(Debug, Parser)]
#[command(name = "d2dcache", version, about = "Transmission cost of D2D file storage schemes under node churn")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form cost rates for one scheme, or all of them.
    Costs(CostsArgs),
    /// Monte Carlo estimate of a scheme's cost rate.
    Simulate(SimulateArgs),
    /// Best cost per scheme over a popularity grid, or per k at one popularity.
    Sweep(SweepArgs),
    /// Switching popularities p1, p2, p3 over an (R, N) grid.
    Thresholds(ThresholdsArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Key-value experiment file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct Population {
    /// Expected number of nodes.
    #[arg(long = "N")]
    pub expected_nodes: Option<f64>,
    /// Node departure rate (default 1).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Per-node request rate; alternative to --p.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Popularity: expected requests per node lifetime.
    #[arg(long)]
    pub p: Option<f64>,
    /// Base-station to D2D cost ratio.
    #[arg(long = "R")]
    pub cost_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Code {
    /// Storage nodes (default 30).
    #[arg(long)]
    pub n: Option<u32>,
    /// Reconstruction degree.
    #[arg(long)]
    pub k: Option<u32>,
    /// Repair degree (default 10).
    #[arg(long)]
    pub d: Option<u32>,
}

#[derive(Debug, Args)]
pub struct CostsArgs {
    #[command(flatten)]
    pub output: Output,
    #[command(flatten)]
    pub population: Population,
    #[command(flatten)]
    pub code: Code,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    /// Every scheme side by side.
    #[arg(long)]
    pub all: bool,
    #[arg(long = "repair-from", value_enum)]
    pub repair_from: Option<RepairFrom>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub output: Output,
    #[command(flatten)]
    pub population: Population,
    #[command(flatten)]
    pub code: Code,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of events to simulate (default 1000000).
    #[arg(long)]
    pub events: Option<u64>,
    /// Simulated time to run for, instead of an event count.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Batches for the confidence interval (default 20, at least 10).
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long, value_enum)]
    pub coupling: Option<CouplingName>,
    #[arg(long = "repair-from", value_enum)]
    pub repair_from: Option<RepairFrom>,
    /// Start from an empty system instead of the stationary law.
    #[arg(long = "cold-start")]
    pub cold_start: bool,
    /// Add the closed-form rates and the relative error.
    #[arg(long = "compare-analytic")]
    pub compare_analytic: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long = "N")]
    pub expected_nodes: Option<f64>,
    #[arg(long = "R")]
    pub cost_ratio: Option<f64>,
    /// Single popularity; required with --by-k.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long = "p-from")]
    pub p_from: Option<f64>,
    #[arg(long = "p-to")]
    pub p_to: Option<f64>,
    /// Log-spaced grid points between --p-from and --p-to (default 64).
    #[arg(long)]
    pub points: Option<usize>,
    /// Cost of every (scheme, k) at the single popularity --p.
    #[arg(long = "by-k")]
    pub by_k: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdsArgs {
    #[command(flatten)]
    pub output: Output,
    /// Cost ratios: comma list or from:to:count (log-spaced).
    #[arg(long = "R-grid", value_parser = grid_arg)]
    pub r_grid: Option<Grid>,
    /// Expected node counts: comma list or from:to:count (log-spaced).
    #[arg(long = "N-grid", value_parser = grid_arg)]
    pub n_grid: Option<Grid>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub d: Option<u32>,
}

pub fn parse_args<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

fn flag(set: bool) -> Option<bool> {
    set.then_some(true)
}

impl Output {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            format: self.format,
            out: self.out.clone(),
            ..Default::default()
        }
    }
}

impl Population {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.overlay(ExperimentConfig {
            expected_nodes: self.expected_nodes,
            lambda: self.lambda,
            omega: self.omega,
            p: self.p,
            cost_ratio: self.cost_ratio,
            ..Default::default()
        });
    }
}

impl Command {
    pub fn config_path(&self) -> Option<&PathBuf> {
        self.output().config.as_ref()
    }

    fn output(&self) -> &Output {
        match self {
            Command::Costs(a) => &a.output,
            Command::Simulate(a) => &a.output,
            Command::Sweep(a) => &a.output,
            Command::Thresholds(a) => &a.output,
        }
    }

    /// Settings given on the command line, as a config to lay over the file.
    pub fn flags(&self) -> ExperimentConfig {
        let mut cfg = self.output().config();
        match self {
            Command::Costs(a) => {
                a.population.apply(&mut cfg);
                cfg.overlay(ExperimentConfig {
                    n: a.code.n,
                    k: a.code.k,
                    d: a.code.d,
                    scheme: a.scheme,
                    all: flag(a.all),
                    repair_from: a.repair_from,
                    ..Default::default()
                });
            }
            Command::Simulate(a) => {
                a.population.apply(&mut cfg);
                cfg.overlay(ExperimentConfig {
                    n: a.code.n,
                    k: a.code.k,
                    d: a.code.d,
                    scheme: a.scheme,
                    seed: a.seed,
                    events: a.events,
                    horizon: a.horizon,
                    batches: a.batches,
                    coupling: a.coupling,
                    repair_from: a.repair_from,
                    cold_start: flag(a.cold_start),
                    compare_analytic: flag(a.compare_analytic),
                    ..Default::default()
                });
            }
            Command::Sweep(a) => {
                cfg.overlay(ExperimentConfig {
                    expected_nodes: a.expected_nodes,
                    cost_ratio: a.cost_ratio,
                    p: a.p,
                    n: a.n,
                    d: a.d,
                    p_from: a.p_from,
                    p_to: a.p_to,
                    points: a.points,
                    by_k: flag(a.by_k),
                    ..Default::default()
                });
            }
            Command::Thresholds(a) => cfg.overlay(ExperimentConfig {
                r_grid: a.r_grid.clone().map(|g| g.0),
                n_grid: a.n_grid.clone().map(|g| g.0),
                n: a.n,
                d: a.d,
                ..Default::default()
            }),
        }
        cfg
    }
}
