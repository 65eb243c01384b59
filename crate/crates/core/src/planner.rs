//! Scheme selection over popularity `p = ω/λ`.
//!
//! Coded schemes are compared at their best reconstruction degree `k` for a
//! fixed `(n, d)`. Switching thresholds are located by a log-spaced sign scan
//! of the cost difference followed by bisection on `log p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{CodeFlavor, CodeParams};
use crate::cost_model::{cost_base_station_only, CostError, CostModel, CostOptions, Scheme, SystemParams};

pub const SCAN_POINTS: usize = 64;
pub const SCAN_MIN_P: f64 = 1e-6;
pub const SCAN_MAX_P: f64 = 1e2;
pub const BISECTION_REL_WIDTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("design space needs 2 <= k_min <= k_max <= d <= n - 1, got n={n}, d={d}, k in [{k_min}, {k_max}]")]
    InvalidDesignSpace { n: u32, d: u32, k_min: u32, k_max: u32 },
    #[error("popularity grid must be nonempty, positive and strictly increasing")]
    InvalidGrid,
    #[error("threshold needs two distinct schemes")]
    SameScheme,
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Fixed `(n, d)` and the admissible reconstruction degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    n: u32,
    d: u32,
    k_min: u32,
    k_max: u32,
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self::new(30, 10).expect("valid default")
    }
}

impl DesignSpace {
    /// `k` ranges over `[2, d]`.
    pub fn new(n: u32, d: u32) -> Result<Self, PlanError> {
        Self::with_k_range(n, d, 2, d)
    }

    pub fn with_k_range(n: u32, d: u32, k_min: u32, k_max: u32) -> Result<Self, PlanError> {
        if 2 <= k_min && k_min <= k_max && k_max <= d && d < n {
            Ok(Self { n, d, k_min, k_max })
        } else {
            Err(PlanError::InvalidDesignSpace { n, d, k_min, k_max })
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn k_range(&self) -> std::ops::RangeInclusive<u32> {
        self.k_min..=self.k_max
    }

    fn code(&self, k: u32) -> CodeParams {
        CodeParams::new(self.n, k, self.d).expect("k range validated against (n, d)")
    }
}

/// Scheme family; coded families are optimized over `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    SimpleCaching,
    Mbr,
    Msr,
    Replication,
    BaseStationOnly,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::SimpleCaching => "simple-caching",
            SchemeKind::Mbr => "mbr",
            SchemeKind::Msr => "msr",
            SchemeKind::Replication => "replication",
            SchemeKind::BaseStationOnly => "base-station",
        }
    }
}

impl From<&Scheme> for SchemeKind {
    fn from(s: &Scheme) -> Self {
        match s {
            Scheme::SimpleCaching => SchemeKind::SimpleCaching,
            Scheme::Mbr(_) => SchemeKind::Mbr,
            Scheme::Msr(_) => SchemeKind::Msr,
            Scheme::Replication { .. } => SchemeKind::Replication,
            Scheme::BaseStationOnly => SchemeKind::BaseStationOnly,
        }
    }
}

/// Cost evaluation for one `(N, R, λ)` scenario and design space, with the
/// popularity left free.
#[derive(Debug, Clone)]
pub struct Planner {
    model: CostModel,
    space: DesignSpace,
    cost_ratio: f64,
    departure_rate: f64,
}

impl Planner {
    pub fn new(expected_nodes: f64, cost_ratio: f64, departure_rate: f64, space: DesignSpace) -> Result<Self, PlanError> {
        // validates N, R and λ together
        SystemParams::new(expected_nodes, departure_rate, 0.0, cost_ratio)?;
        Ok(Self {
            model: CostModel::new(expected_nodes, CostOptions::default())?,
            space,
            cost_ratio,
            departure_rate,
        })
    }

    pub fn with_options(mut self, options: CostOptions) -> Result<Self, PlanError> {
        self.model = CostModel::new(self.model.expected_nodes(), options)?;
        Ok(self)
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn params(&self, popularity: f64) -> Result<SystemParams, PlanError> {
        Ok(SystemParams::with_popularity(
            self.model.expected_nodes(),
            self.departure_rate,
            popularity,
            self.cost_ratio,
        )?)
    }

    /// Cost of one code at `k`, for the given flavor.
    pub fn coded_cost(&self, params: &SystemParams, flavor: CodeFlavor, k: u32) -> Result<f64, PlanError> {
        let code = self.space.code(k);
        let point = flavor.point(1.0, &code).map_err(CostError::from)?;
        Ok(self.model.regenerating(params, &code, &point)?.total)
    }

    /// Exhaustive scan over `k`; ties go to the smaller `k`.
    pub fn best_k(&self, params: &SystemParams, flavor: CodeFlavor) -> Result<(u32, f64), PlanError> {
        let mut best: Option<(u32, f64)> = None;
        for k in self.space.k_range() {
            let cost = self.coded_cost(params, flavor, k)?;
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((k, cost));
            }
        }
        Ok(best.expect("k range is nonempty"))
    }

    /// Cost of a scheme family, optimizing `k` for coded families.
    pub fn kind_cost(&self, params: &SystemParams, kind: SchemeKind) -> Result<f64, PlanError> {
        Ok(match kind {
            SchemeKind::SimpleCaching => self.model.scheme_total(params, &Scheme::SimpleCaching)?,
            SchemeKind::Mbr => self.best_k(params, CodeFlavor::Mbr)?.1,
            SchemeKind::Msr => self.best_k(params, CodeFlavor::Msr)?.1,
            SchemeKind::Replication => self.model.replication(params, self.space.n)?.total,
            SchemeKind::BaseStationOnly => cost_base_station_only(params),
        })
    }

    /// Cheapest of simple caching, best MBR, best MSR and replication; ties
    /// go to the earlier entry in that order.
    pub fn best_method(&self, params: &SystemParams) -> Result<(Scheme, f64), PlanError> {
        let sc = self.model.scheme_total(params, &Scheme::SimpleCaching)?;
        let (k_mbr, mbr) = self.best_k(params, CodeFlavor::Mbr)?;
        let (k_msr, msr) = self.best_k(params, CodeFlavor::Msr)?;
        let rep = self.model.replication(params, self.space.n)?.total;
        let candidates = [
            (Scheme::SimpleCaching, sc),
            (Scheme::Mbr(self.space.code(k_mbr)), mbr),
            (Scheme::Msr(self.space.code(k_msr)), msr),
            (Scheme::Replication { n: self.space.n }, rep),
        ];
        let mut best = candidates[0];
        for c in &candidates[1..] {
            if c.1 < best.1 {
                best = *c;
            }
        }
        Ok(best)
    }

    pub fn sweep_row(&self, popularity: f64) -> Result<SweepRow, PlanError> {
        let params = self.params(popularity)?;
        let cost_sc = self.model.scheme_total(&params, &Scheme::SimpleCaching)?;
        let (k_mbr, cost_mbr_best) = self.best_k(&params, CodeFlavor::Mbr)?;
        let (k_msr, cost_msr_best) = self.best_k(&params, CodeFlavor::Msr)?;
        let cost_rep = self.model.replication(&params, self.space.n)?.total;
        let (best, _) = self.best_method(&params)?;
        Ok(SweepRow {
            p: popularity,
            cost_sc,
            cost_mbr_best,
            k_mbr,
            cost_msr_best,
            k_msr,
            cost_rep,
            best_scheme: SchemeKind::from(&best),
        })
    }

    /// Per-`k` costs at one popularity for both code flavors.
    pub fn by_k(&self, popularity: f64) -> Result<Vec<(CodeFlavor, u32, f64)>, PlanError> {
        let params = self.params(popularity)?;
        let mut rows = Vec::new();
        for flavor in [CodeFlavor::Mbr, CodeFlavor::Msr] {
            for k in self.space.k_range() {
                rows.push((flavor, k, self.coded_cost(&params, flavor, k)?));
            }
        }
        Ok(rows)
    }

    /// Smallest popularity at which `b` takes over from `a` as the cheaper
    /// scheme. Crossings in the other direction are counted but not returned.
    pub fn threshold(&self, a: SchemeKind, b: SchemeKind) -> Result<Crossing, PlanError> {
        if a == b {
            return Err(PlanError::SameScheme);
        }
        let gap = |p: f64| -> Result<f64, PlanError> {
            let params = self.params(p)?;
            Ok(self.kind_cost(&params, a)? - self.kind_cost(&params, b)?)
        };
        let grid = log_grid(SCAN_MIN_P, SCAN_MAX_P, SCAN_POINTS);
        let gaps = grid.iter().map(|&p| gap(p)).collect::<Result<Vec<_>, _>>()?;

        let mut crossings = 0;
        let mut first: Option<(f64, f64)> = None;
        for j in 0..grid.len() - 1 {
            if (gaps[j] < 0.0) != (gaps[j + 1] < 0.0) {
                crossings += 1;
                if first.is_none() && gaps[j] < 0.0 {
                    first = Some((grid[j], grid[j + 1]));
                }
            }
        }
        let Some((mut lo, mut hi)) = first else {
            return Ok(Crossing::None { crossings });
        };
        let mut g_lo = gap(lo)?;
        if g_lo == 0.0 {
            return Ok(Crossing::Found { p: lo, crossings });
        }
        // Bisect in log p well past the required relative width so the two
        // costs agree to ~1e-6 relative at the reported point.
        while hi / lo - 1.0 > BISECTION_REL_WIDTH * 1e-6 {
            let mid = (lo * hi).sqrt();
            if mid <= lo || mid >= hi {
                break;
            }
            let g = gap(mid)?;
            if g == 0.0 {
                return Ok(Crossing::Found { p: mid, crossings });
            }
            if (g < 0.0) == (g_lo < 0.0) {
                lo = mid;
                g_lo = g;
            } else {
                hi = mid;
            }
        }
        Ok(Crossing::Found {
            p: (lo * hi).sqrt(),
            crossings,
        })
    }

    /// `p1` (simple caching to MBR), `p2` (MBR to MSR), `p3` (MSR to replication).
    pub fn thresholds(&self) -> Result<ThresholdResult, PlanError> {
        Ok(ThresholdResult {
            p1: self.threshold(SchemeKind::SimpleCaching, SchemeKind::Mbr)?,
            p2: self.threshold(SchemeKind::Mbr, SchemeKind::Msr)?,
            p3: self.threshold(SchemeKind::Msr, SchemeKind::Replication)?,
        })
    }
}

/// Outcome of a threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    /// `crossings` counts sign changes seen by the scan in either direction;
    /// more than one means `p` is the smallest of several.
    Found { p: f64, crossings: usize },
    /// No switch from `a` to `b` inside the scan range, though the scan may
    /// have seen switches back from `b` to `a`.
    None { crossings: usize },
}

impl Crossing {
    pub fn p(&self) -> Option<f64> {
        match self {
            Crossing::Found { p, .. } => Some(*p),
            Crossing::None { .. } => None,
        }
    }

    pub fn crossings(&self) -> usize {
        match self {
            Crossing::Found { crossings, .. } | Crossing::None { crossings } => *crossings,
        }
    }

    pub fn is_multiple(&self) -> bool {
        self.crossings() > 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub p1: Crossing,
    pub p2: Crossing,
    pub p3: Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub cost_sc: f64,
    pub cost_mbr_best: f64,
    pub k_mbr: u32,
    pub cost_msr_best: f64,
    pub k_msr: u32,
    pub cost_rep: f64,
    pub best_scheme: SchemeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub cost_ratio: f64,
    pub expected_nodes: f64,
    pub thresholds: ThresholdResult,
}

/// `points` values log-spaced over `[from, to]`; a single point yields `[from]`.
pub fn log_grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        _ => {
            let (a, b) = (from.ln(), to.ln());
            (0..points)
                .map(|j| {
                    if j == 0 {
                        from
                    } else if j + 1 == points {
                        to
                    } else {
                        (a + (b - a) * j as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

pub fn best_k(params: &SystemParams, space: &DesignSpace, flavor: CodeFlavor) -> Result<(u32, f64), PlanError> {
    Planner::new(params.expected_nodes(), params.cost_ratio(), params.departure_rate(), *space)?.best_k(params, flavor)
}

pub fn best_method(params: &SystemParams, space: &DesignSpace) -> Result<(Scheme, f64), PlanError> {
    Planner::new(params.expected_nodes(), params.cost_ratio(), params.departure_rate(), *space)?.best_method(params)
}

/// One row per popularity with `λ = 1`, `ω = p`.
pub fn sweep_p(cost_ratio: f64, expected_nodes: f64, space: &DesignSpace, p_grid: &[f64]) -> Result<Vec<SweepRow>, PlanError> {
    let valid = !p_grid.is_empty()
        && p_grid.iter().all(|p| p.is_finite() && *p > 0.0)
        && p_grid.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(PlanError::InvalidGrid);
    }
    let planner = Planner::new(expected_nodes, cost_ratio, 1.0, *space)?;
    p_grid.par_iter().map(|&p| planner.sweep_row(p)).collect()
}

pub fn threshold(a: SchemeKind, b: SchemeKind, cost_ratio: f64, expected_nodes: f64, space: &DesignSpace) -> Result<Crossing, PlanError> {
    Planner::new(expected_nodes, cost_ratio, 1.0, *space)?.threshold(a, b)
}

/// Thresholds for every `(R, N)` pair, evaluated in parallel and returned
/// ordered by `(R, N)` as given in the grids. A cell whose parameters are
/// invalid yields an error for that cell only.
pub fn threshold_surface(r_grid: &[f64], n_grid: &[f64], space: &DesignSpace) -> Vec<Result<SurfaceRow, PlanError>> {
    let cells: Vec<(f64, f64)> = r_grid.iter().flat_map(|&r| n_grid.iter().map(move |&n| (r, n))).collect();
    cells
        .par_iter()
        .map(|&(r, n)| {
            let thresholds = Planner::new(n, r, 1.0, *space)?.thresholds()?;
            Ok(SurfaceRow {
                cost_ratio: r,
                expected_nodes: n,
                thresholds,
            })
        })
        .collect()
}
