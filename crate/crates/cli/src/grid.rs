//! Numeric grid lists: `20,60,100` or a log-spaced range `1e2:1e5:4`.

use d2dcache::planner::log_grid;
use thiserror::Error;

/// Upper bound on generated range points, so a typo cannot allocate gigabytes.
pub const MAX_RANGE_POINTS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("empty grid")]
    Empty,
    #[error("grid value {0:?} is not a number")]
    NotANumber(String),
    #[error("grid values must be positive and finite, got {0}")]
    OutOfRange(f64),
    #[error("range must look like from:to:count, got {0:?}")]
    BadRange(String),
    #[error("range count must be in 1..={MAX_RANGE_POINTS}, got {0}")]
    BadCount(String),
}

fn value(s: &str) -> Result<f64, GridError> {
    let v: f64 = s.trim().parse().map_err(|_| GridError::NotANumber(s.trim().to_string()))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(GridError::OutOfRange(v))
    }
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, GridError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(GridError::Empty);
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [from, to, count] = parts[..] else {
            return Err(GridError::BadRange(s.to_string()));
        };
        let (from, to) = (value(from)?, value(to)?);
        let count: usize = count
            .trim()
            .parse()
            .ok()
            .filter(|c| (1..=MAX_RANGE_POINTS).contains(c))
            .ok_or_else(|| GridError::BadCount(count.trim().to_string()))?;
        if count > 1 && from >= to {
            return Err(GridError::BadRange(s.to_string()));
        }
        return Ok(log_grid(from, to, count));
    }
    s.split(',').map(value).collect()
}

/// Comma-separated list that [`parse_grid`] reads back exactly.
pub fn format_grid(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
