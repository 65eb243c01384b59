//! Experiment configuration files.
//!
//! One `key = value` pair per line. Blank lines and lines starting with `#`
//! are ignored. Keys are the long flag names without the leading dashes
//! (`N`, `p`, `R-grid`, `compare-analytic`, ...); unknown or repeated keys
//! are errors. Flags given on the command line override file values.

use std::fmt::Write as _;
use std::str::FromStr;

use clap::ValueEnum;
use thiserror::Error;

use crate::grid::{format_grid, parse_grid, GridError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    SimpleCaching,
    Mbr,
    Msr,
    Replication,
    BaseStation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingName {
    Deterministic,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepairFrom {
    #[value(name = "n+2")]
    NPlusTwo,
    #[value(name = "n+1")]
    NPlusOne,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}: {reason}")]
    Value {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
}

/// Every setting the commands read. `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub expected_nodes: Option<f64>,
    pub lambda: Option<f64>,
    pub omega: Option<f64>,
    pub p: Option<f64>,
    pub cost_ratio: Option<f64>,
    pub n: Option<u32>,
    pub k: Option<u32>,
    pub d: Option<u32>,
    pub scheme: Option<SchemeName>,
    pub all: Option<bool>,
    pub repair_from: Option<RepairFrom>,
    pub seed: Option<u64>,
    pub events: Option<u64>,
    pub horizon: Option<f64>,
    pub batches: Option<usize>,
    pub coupling: Option<CouplingName>,
    pub cold_start: Option<bool>,
    pub compare_analytic: Option<bool>,
    pub p_from: Option<f64>,
    pub p_to: Option<f64>,
    pub points: Option<usize>,
    pub by_k: Option<bool>,
    pub r_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<f64>>,
    pub format: Option<Format>,
    pub out: Option<String>,
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "not a number".to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".to_string())
    }
}

fn integer<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| "not a nonnegative integer".to_string())
}

fn boolean(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".to_string()),
    }
}

fn choice<T: ValueEnum>(s: &str) -> Result<T, String> {
    T::from_str(s, false)
}

fn grid(s: &str) -> Result<Vec<f64>, String> {
    parse_grid(s).map_err(|e: GridError| e.to_string())
}

fn name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            let bad = |reason: String| ConfigError::Value {
                line,
                key: key.to_string(),
                value: value.to_string(),
                reason,
            };
            match key {
                "N" => cfg.expected_nodes = Some(finite(value).map_err(bad)?),
                "lambda" => cfg.lambda = Some(finite(value).map_err(bad)?),
                "omega" => cfg.omega = Some(finite(value).map_err(bad)?),
                "p" => cfg.p = Some(finite(value).map_err(bad)?),
                "R" => cfg.cost_ratio = Some(finite(value).map_err(bad)?),
                "n" => cfg.n = Some(integer(value).map_err(bad)?),
                "k" => cfg.k = Some(integer(value).map_err(bad)?),
                "d" => cfg.d = Some(integer(value).map_err(bad)?),
                "scheme" => cfg.scheme = Some(choice(value).map_err(bad)?),
                "all" => cfg.all = Some(boolean(value).map_err(bad)?),
                "repair-from" => cfg.repair_from = Some(choice(value).map_err(bad)?),
                "seed" => cfg.seed = Some(integer(value).map_err(bad)?),
                "events" => cfg.events = Some(integer(value).map_err(bad)?),
                "horizon" => cfg.horizon = Some(finite(value).map_err(bad)?),
                "batches" => cfg.batches = Some(integer(value).map_err(bad)?),
                "coupling" => cfg.coupling = Some(choice(value).map_err(bad)?),
                "cold-start" => cfg.cold_start = Some(boolean(value).map_err(bad)?),
                "compare-analytic" => cfg.compare_analytic = Some(boolean(value).map_err(bad)?),
                "p-from" => cfg.p_from = Some(finite(value).map_err(bad)?),
                "p-to" => cfg.p_to = Some(finite(value).map_err(bad)?),
                "points" => cfg.points = Some(integer(value).map_err(bad)?),
                "by-k" => cfg.by_k = Some(boolean(value).map_err(bad)?),
                "R-grid" => cfg.r_grid = Some(grid(value).map_err(bad)?),
                "N-grid" => cfg.n_grid = Some(grid(value).map_err(bad)?),
                "format" => cfg.format = Some(choice(value).map_err(bad)?),
                "out" => cfg.out = Some(value.to_string()),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    /// Renders the set fields in a fixed key order. `parse` reads the result
    /// back unchanged as long as `out` has no line breaks or surrounding
    /// whitespace.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                writeln!(s, "{key} = {v}").expect("writing to a String");
            }
        };
        put("N", self.expected_nodes.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("omega", self.omega.map(|v| v.to_string()));
        put("p", self.p.map(|v| v.to_string()));
        put("R", self.cost_ratio.map(|v| v.to_string()));
        put("n", self.n.map(|v| v.to_string()));
        put("k", self.k.map(|v| v.to_string()));
        put("d", self.d.map(|v| v.to_string()));
        put("scheme", self.scheme.as_ref().map(name));
        put("all", self.all.map(|v| v.to_string()));
        put("repair-from", self.repair_from.as_ref().map(name));
        put("seed", self.seed.map(|v| v.to_string()));
        put("events", self.events.map(|v| v.to_string()));
        put("horizon", self.horizon.map(|v| v.to_string()));
        put("batches", self.batches.map(|v| v.to_string()));
        put("coupling", self.coupling.as_ref().map(name));
        put("cold-start", self.cold_start.map(|v| v.to_string()));
        put("compare-analytic", self.compare_analytic.map(|v| v.to_string()));
        put("p-from", self.p_from.map(|v| v.to_string()));
        put("p-to", self.p_to.map(|v| v.to_string()));
        put("points", self.points.map(|v| v.to_string()));
        put("by-k", self.by_k.map(|v| v.to_string()));
        put("R-grid", self.r_grid.as_deref().map(format_grid));
        put("N-grid", self.n_grid.as_deref().map(format_grid));
        put("format", self.format.as_ref().map(name));
        put("out", self.out.clone());
        s
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: ExperimentConfig) {
        macro_rules! take {
            ($($f:ident),*) => {$(
                if other.$f.is_some() {
                    self.$f = other.$f;
                }
            )*};
        }
        take!(
            expected_nodes, lambda, omega, p, cost_ratio, n, k, d, scheme, all, repair_from, seed, events, horizon,
            batches, coupling, cold_start, compare_analytic, p_from, p_to, points, by_k, r_grid, n_grid, format, out
        );
    }
}
