//! Closed-form expected transmission cost per time unit for each storage
//! scheme.
//!
//! Costs are in units of "one file over a D2D link"; a base-station
//! transfer of the same data costs `R` times as much. For the coded schemes
//! the cost splits into six parts:
//!
//! | term | event |
//! |------|-------|
//! | `allocation` | population climbs from `k-1` to `k`: the base station seeds `k` blocks |
//! | `redundancy` | an arrival while fewer than `n` blocks exist receives a new block |
//! | `repair` | a storage node leaves and its block is regenerated elsewhere |
//! | `remote_retrieval` | a request while fewer than `k` nodes are present |
//! | `storage_reconstruction` | a request while every node stores a block |
//! | `bulk_reconstruction` | a request while more than `n` nodes are present |
//!
//! The churn-driven terms (first three) are per-event costs weighted by the
//! embedded-chain probabilities and converted to rates with the constant
//! `2Nλ` (see [`crate::markov::Normalizer::Asymptotic`]).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{CodeError, CodeFlavor, CodeParams, CodePoint};
use crate::markov::{event_rate_normalizer, MarkovError, Normalizer, PopulationModel, StationaryTable, DEFAULT_TAIL_EPS};
use crate::numeric::compensated_sum;

/// File size. All costs are per unit file.
pub const FILE_SIZE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("expected node count N must be positive and finite, got {0}")]
    InvalidExpectedNodes(f64),
    #[error("departure rate lambda must be positive and finite, got {0}")]
    InvalidDepartureRate(f64),
    #[error("request rate omega must be nonnegative and finite, got {0}")]
    InvalidRequestRate(f64),
    #[error("cost ratio R must exceed 1, got {0}")]
    InvalidCostRatio(f64),
    #[error("replication needs n >= 1 storage nodes, got {0}")]
    InvalidReplication(u32),
    #[error("{flavor:?} scheme needs k >= 2, got k = {k}")]
    DegenerateCode { flavor: CodeFlavor, k: u32 },
    #[error("no requests: simple caching cost is 0 by convention when omega = 0")]
    NoRequests,
    #[error("code point does not belong to the given code parameters")]
    PointMismatch,
    #[error("parameters use N = {got}, but the cost model was built for N = {expected}")]
    PopulationMismatch { expected: f64, got: f64 },
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// Environment: population, churn, request rate and cost ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    expected_nodes: f64,
    departure_rate: f64,
    request_rate: f64,
    cost_ratio: f64,
}

impl SystemParams {
    pub fn new(expected_nodes: f64, departure_rate: f64, request_rate: f64, cost_ratio: f64) -> Result<Self, CostError> {
        if !(expected_nodes.is_finite() && expected_nodes > 0.0) {
            return Err(CostError::InvalidExpectedNodes(expected_nodes));
        }
        if !(departure_rate.is_finite() && departure_rate > 0.0) {
            return Err(CostError::InvalidDepartureRate(departure_rate));
        }
        if !(request_rate.is_finite() && request_rate >= 0.0) {
            return Err(CostError::InvalidRequestRate(request_rate));
        }
        if !(cost_ratio.is_finite() && cost_ratio > 1.0) {
            return Err(CostError::InvalidCostRatio(cost_ratio));
        }
        Ok(Self {
            expected_nodes,
            departure_rate,
            request_rate,
            cost_ratio,
        })
    }

    /// Parameters with request rate `omega = p * lambda`.
    pub fn with_popularity(expected_nodes: f64, departure_rate: f64, popularity: f64, cost_ratio: f64) -> Result<Self, CostError> {
        Self::new(expected_nodes, departure_rate, popularity * departure_rate, cost_ratio)
    }

    pub fn expected_nodes(&self) -> f64 {
        self.expected_nodes
    }

    pub fn departure_rate(&self) -> f64 {
        self.departure_rate
    }

    pub fn request_rate(&self) -> f64 {
        self.request_rate
    }

    pub fn cost_ratio(&self) -> f64 {
        self.cost_ratio
    }

    /// Mean sojourn `T = 1/lambda`.
    pub fn mean_sojourn(&self) -> f64 {
        1.0 / self.departure_rate
    }

    /// Expected requests per node per sojourn, `p = omega / lambda`.
    pub fn popularity(&self) -> f64 {
        self.request_rate / self.departure_rate
    }

    pub fn population(&self) -> PopulationModel {
        PopulationModel::new(self.expected_nodes, self.departure_rate).expect("validated at construction")
    }
}

/// Storage scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    SimpleCaching,
    Mbr(CodeParams),
    Msr(CodeParams),
    Replication { n: u32 },
    BaseStationOnly,
}

impl Scheme {
    /// Checks the planner-level invariants: coded schemes need `k >= 2`,
    /// replication needs `n >= 1`. The cost model and simulator themselves
    /// accept `k = 1` as the replication degeneracy.
    pub fn validate(&self) -> Result<(), CostError> {
        match self {
            Scheme::Mbr(code) if code.k() < 2 => Err(CostError::DegenerateCode {
                flavor: CodeFlavor::Mbr,
                k: code.k(),
            }),
            Scheme::Msr(code) if code.k() < 2 => Err(CostError::DegenerateCode {
                flavor: CodeFlavor::Msr,
                k: code.k(),
            }),
            Scheme::Replication { n } if *n < 1 => Err(CostError::InvalidReplication(*n)),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::SimpleCaching => "simple-caching",
            Scheme::Mbr(_) => "mbr",
            Scheme::Msr(_) => "msr",
            Scheme::Replication { .. } => "replication",
            Scheme::BaseStationOnly => "base-station",
        }
    }

    /// Block layout `(n, k, d, alpha, gamma)` for schemes that store blocks.
    pub fn layout(&self) -> Result<Option<BlockLayout>, CostError> {
        Ok(match self {
            Scheme::Mbr(code) | Scheme::Msr(code) => {
                let flavor = if matches!(self, Scheme::Mbr(_)) { CodeFlavor::Mbr } else { CodeFlavor::Msr };
                let point = flavor.point(FILE_SIZE, code)?;
                Some(BlockLayout::coded(code, &point))
            }
            Scheme::Replication { n } => {
                if *n < 1 {
                    return Err(CostError::InvalidReplication(*n));
                }
                Some(BlockLayout::replication(*n))
            }
            Scheme::SimpleCaching | Scheme::BaseStationOnly => None,
        })
    }
}

/// Parameters that fully determine the coded-storage cost terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLayout {
    pub n: u32,
    pub k: u32,
    pub d: u32,
    pub alpha: f64,
    pub gamma: f64,
}

impl BlockLayout {
    pub fn coded(code: &CodeParams, point: &CodePoint) -> Self {
        Self {
            n: code.n(),
            k: code.k(),
            d: code.d(),
            alpha: point.alpha(),
            gamma: point.gamma(),
        }
    }

    /// `k = alpha = gamma = 1`; `d = 1` merges both redundancy ranges.
    pub fn replication(n: u32) -> Self {
        Self {
            n,
            k: 1,
            d: 1,
            alpha: 1.0,
            gamma: 1.0,
        }
    }

    /// Cost of handing a new node its block when `blocks` storage nodes exist.
    pub fn redundancy_cost(&self, blocks: u64) -> f64 {
        if blocks < u64::from(self.d) {
            f64::from(self.k) * self.alpha
        } else {
            self.gamma
        }
    }
}

/// Lowest population at which a departed storage node is repaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairThreshold {
    /// Repair from `i = n + 2`, the published summation limit.
    #[default]
    NPlusTwo,
    /// Repair from `i = n + 1`, the first state that leaves an empty node
    /// after the departure.
    NPlusOne,
}

impl RepairThreshold {
    pub fn first_state(self, n: u32) -> u64 {
        match self {
            RepairThreshold::NPlusTwo => u64::from(n) + 2,
            RepairThreshold::NPlusOne => u64::from(n) + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostOptions {
    pub repair_from: RepairThreshold,
}

/// The six cost rates of a coded scheme and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub allocation: f64,
    pub redundancy: f64,
    pub repair: f64,
    pub remote_retrieval: f64,
    pub storage_reconstruction: f64,
    pub bulk_reconstruction: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn from_terms(terms: [f64; 6]) -> Self {
        let [allocation, redundancy, repair, remote_retrieval, storage_reconstruction, bulk_reconstruction] = terms;
        Self {
            allocation,
            redundancy,
            repair,
            remote_retrieval,
            storage_reconstruction,
            bulk_reconstruction,
            total: allocation + redundancy + repair + remote_retrieval + storage_reconstruction + bulk_reconstruction,
        }
    }

    /// Terms in order C1..C6.
    pub fn terms(&self) -> [f64; 6] {
        [
            self.allocation,
            self.redundancy,
            self.repair,
            self.remote_retrieval,
            self.storage_reconstruction,
            self.bulk_reconstruction,
        ]
    }
}

/// Cost evaluator for a fixed expected population `N`.
///
/// Holds the tabulated stationary pmf so that repeated evaluations at the
/// same `N` (popularity sweeps, threshold searches) only pay for the short
/// finite sums.
#[derive(Debug, Clone)]
pub struct CostModel {
    table: Arc<StationaryTable>,
    options: CostOptions,
}

impl CostModel {
    pub fn new(expected_nodes: f64, options: CostOptions) -> Result<Self, CostError> {
        // The pmf depends on N only; the rate in the table's model is unused.
        let model = PopulationModel::new(expected_nodes, 1.0)?;
        Ok(Self {
            table: Arc::new(StationaryTable::new(&model, DEFAULT_TAIL_EPS)?),
            options,
        })
    }

    pub fn for_params(params: &SystemParams, options: CostOptions) -> Result<Self, CostError> {
        Self::new(params.expected_nodes, options)
    }

    pub fn options(&self) -> CostOptions {
        self.options
    }

    pub fn expected_nodes(&self) -> f64 {
        self.table.model().expected_nodes()
    }

    fn check(&self, params: &SystemParams) -> Result<(), CostError> {
        let expected = self.expected_nodes();
        if params.expected_nodes == expected {
            Ok(())
        } else {
            Err(CostError::PopulationMismatch {
                expected,
                got: params.expected_nodes,
            })
        }
    }

    pub fn simple_caching(&self, params: &SystemParams) -> Result<f64, CostError> {
        self.check(params)?;
        cost_simple_caching(params)
    }

    pub fn base_station_only(&self, params: &SystemParams) -> Result<f64, CostError> {
        self.check(params)?;
        Ok(cost_base_station_only(params))
    }

    pub fn regenerating(&self, params: &SystemParams, code: &CodeParams, point: &CodePoint) -> Result<CostBreakdown, CostError> {
        self.check(params)?;
        let expected = point.flavor.point(point.file_size, code)?;
        if expected.alpha_fraction() != point.alpha_fraction() || expected.gamma_fraction() != point.gamma_fraction() {
            return Err(CostError::PointMismatch);
        }
        Ok(self.layout_costs(params, &BlockLayout::coded(code, point)))
    }

    pub fn replication(&self, params: &SystemParams, n: u32) -> Result<CostBreakdown, CostError> {
        self.check(params)?;
        if n < 1 {
            return Err(CostError::InvalidReplication(n));
        }
        Ok(self.layout_costs(params, &BlockLayout::replication(n)))
    }

    /// Total cost rate of any scheme; simple caching with no requests costs 0.
    pub fn scheme_total(&self, params: &SystemParams, scheme: &Scheme) -> Result<f64, CostError> {
        self.check(params)?;
        match scheme {
            Scheme::SimpleCaching => match cost_simple_caching(params) {
                Err(CostError::NoRequests) => Ok(0.0),
                other => other,
            },
            Scheme::BaseStationOnly => Ok(cost_base_station_only(params)),
            _ => Ok(self.scheme_breakdown(params, scheme)?.map_or(0.0, |b| b.total)),
        }
    }

    /// Six-term breakdown for schemes that store blocks, `None` otherwise.
    pub fn scheme_breakdown(&self, params: &SystemParams, scheme: &Scheme) -> Result<Option<CostBreakdown>, CostError> {
        self.check(params)?;
        Ok(scheme.layout()?.map(|layout| self.layout_costs(params, &layout)))
    }

    /// The six terms for an arbitrary block layout.
    pub fn layout_costs(&self, params: &SystemParams, layout: &BlockLayout) -> CostBreakdown {
        let t = &*self.table;
        let big_n = params.expected_nodes;
        let omega = params.request_rate;
        let r = params.cost_ratio;
        let (n, k, d) = (u64::from(layout.n), u64::from(layout.k), u64::from(layout.d));
        let (nf, kf) = (n as f64, k as f64);
        let (alpha, gamma) = (layout.alpha, layout.gamma);
        let norm = event_rate_normalizer(&params.population(), Normalizer::Asymptotic);
        let arrival_next = |i: u64| big_n / (i as f64 + big_n);

        let allocation = norm * t.pmf(k - 1) * arrival_next(k - 1) * r * kf * alpha;

        let redundancy = norm
            * compensated_sum((k..n).map(|i| {
                let per_block = if i < d { kf * alpha } else { gamma };
                t.pmf(i) * arrival_next(i) * per_block
            }));

        let repair = norm * nf * gamma * t.tail_inverse(self.options.repair_from.first_state(layout.n));

        let remote_retrieval = omega * r * t.range_sum(1, k - 1, |i| i as f64);

        let storage_reconstruction = omega * (kf - 1.0) * alpha * t.range_sum(k, n, |i| i as f64);

        let bulk_reconstruction = alpha * omega * (kf * t.tail_mean(n + 1) - nf * t.tail_mass(n + 1)).max(0.0);

        CostBreakdown::from_terms([
            allocation,
            redundancy,
            repair,
            remote_retrieval,
            storage_reconstruction,
            bulk_reconstruction,
        ])
    }
}

/// Expected cost rate with a single uncoded copy on one device:
/// `((N-1)ω + Rλ) / (1 + λ/(Nω))`.
pub fn cost_simple_caching(params: &SystemParams) -> Result<f64, CostError> {
    let SystemParams {
        expected_nodes: n,
        departure_rate: lambda,
        request_rate: omega,
        cost_ratio: r,
    } = *params;
    if omega == 0.0 {
        return Err(CostError::NoRequests);
    }
    Ok(((n - 1.0) * omega + r * lambda) / (1.0 + lambda / (n * omega)))
}

/// Every request served by the base station: `RNω`.
pub fn cost_base_station_only(params: &SystemParams) -> f64 {
    params.cost_ratio * params.expected_nodes * params.request_rate
}

pub fn cost_regenerating(params: &SystemParams, code: &CodeParams, point: &CodePoint) -> Result<CostBreakdown, CostError> {
    CostModel::for_params(params, CostOptions::default())?.regenerating(params, code, point)
}

pub fn cost_replication(params: &SystemParams, n: u32) -> Result<CostBreakdown, CostError> {
    CostModel::for_params(params, CostOptions::default())?.replication(params, n)
}
