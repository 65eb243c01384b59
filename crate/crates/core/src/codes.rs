//! Regenerating-code operating points.
//!
//! Per-node storage `alpha` and repair traffic `gamma` are kept as exact
//! fractions of the file size `B`; [`CodePoint::alpha`] and
//! [`CodePoint::gamma`] scale them by `B`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("code parameters must satisfy 1 <= k <= d <= n - 1, got n={n}, k={k}, d={d}")]
    InvalidParams { n: u32, k: u32, d: u32 },
    #[error("file size B must be positive and finite, got {0}")]
    InvalidFileSize(f64),
}

/// `(n, k, d)`: storage nodes, reconstruction degree, repair degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeParams {
    n: u32,
    k: u32,
    d: u32,
}

impl CodeParams {
    /// `k = 1` is accepted: it is the replication degeneracy.
    pub fn new(n: u32, k: u32, d: u32) -> Result<Self, CodeError> {
        if k >= 1 && k <= d && d < n {
            Ok(Self { n, k, d })
        } else {
            Err(CodeError::InvalidParams { n, k, d })
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn d(&self) -> u32 {
        self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeFlavor {
    Mbr,
    Msr,
}

impl CodeFlavor {
    pub fn point(self, file_size: f64, code: &CodeParams) -> Result<CodePoint, CodeError> {
        match self {
            CodeFlavor::Mbr => mbr_point(file_size, code),
            CodeFlavor::Msr => msr_point(file_size, code),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodePoint {
    pub flavor: CodeFlavor,
    pub file_size: f64,
    alpha: Ratio<u64>,
    gamma: Ratio<u64>,
}

impl CodePoint {
    /// Storage per node as an exact fraction of `B`.
    pub fn alpha_fraction(&self) -> Ratio<u64> {
        self.alpha
    }

    /// Repair traffic as an exact fraction of `B`.
    pub fn gamma_fraction(&self) -> Ratio<u64> {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.file_size * ratio_to_f64(self.alpha)
    }

    pub fn gamma(&self) -> f64 {
        self.file_size * ratio_to_f64(self.gamma)
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn check_file_size(file_size: f64) -> Result<(), CodeError> {
    if file_size.is_finite() && file_size > 0.0 {
        Ok(())
    } else {
        Err(CodeError::InvalidFileSize(file_size))
    }
}

/// Minimum-bandwidth point: `alpha = gamma = 2Bd / (2kd - k² + k)`.
pub fn mbr_point(file_size: f64, code: &CodeParams) -> Result<CodePoint, CodeError> {
    check_file_size(file_size)?;
    let (k, d) = (u64::from(code.k), u64::from(code.d));
    // 2kd - k² + k = k(2d - k + 1), positive since k <= d
    let value = Ratio::new(2 * d, k * (2 * d - k + 1));
    Ok(CodePoint {
        flavor: CodeFlavor::Mbr,
        file_size,
        alpha: value,
        gamma: value,
    })
}

/// Minimum-storage point: `alpha = B/k`, `gamma = Bd / (k(d - k + 1))`.
pub fn msr_point(file_size: f64, code: &CodeParams) -> Result<CodePoint, CodeError> {
    check_file_size(file_size)?;
    let (k, d) = (u64::from(code.k), u64::from(code.d));
    Ok(CodePoint {
        flavor: CodeFlavor::Msr,
        file_size,
        alpha: Ratio::new(1, k),
        gamma: Ratio::new(d, k * (d - k + 1)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PopulationWarning {
    /// The analytic model assumes `n` is much smaller than `N`.
    StorageNodesNotSparse { n: u32, expected_nodes: f64 },
}

impl std::fmt::Display for PopulationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PopulationWarning::StorageNodesNotSparse { n, expected_nodes } => write!(
                f,
                "n = {n} exceeds N/10 = {}; the cost model assumes n << N",
                expected_nodes / 10.0
            ),
        }
    }
}

/// Non-fatal checks of a code against the population size.
pub fn validate_against_population(code: &CodeParams, expected_nodes: f64) -> Vec<PopulationWarning> {
    let mut warnings = Vec::new();
    if f64::from(code.n) > expected_nodes / 10.0 {
        warnings.push(PopulationWarning::StorageNodesNotSparse {
            n: code.n,
            expected_nodes,
        });
    }
    warnings
}
