//! Discrete-event Monte Carlo of node churn, file requests and block
//! maintenance.
//!
//! In a state with `i` nodes the next event is an arrival (rate `Nλ`), the
//! departure of a uniformly chosen node (rate `iλ`) or a request from a
//! uniformly chosen node (rate `iω`). The event kind is picked with a single
//! uniform draw against the normalized rates; a second draw picks the
//! affected node where that matters.
//!
//! For coded schemes two bookkeeping modes exist. [`Coupling::Deterministic`]
//! assumes the number of stored blocks is always `min(i, n)` while `i >= k`
//! and zero below, which is what the closed-form model presumes.
//! [`Coupling::Strict`] tracks the block count event by event and reports how
//! often it departs from that assumption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cost_model::{BlockLayout, CostBreakdown, CostError, CostModel, CostOptions, RepairThreshold, Scheme, SystemParams};
use crate::markov::{PopulationModel, StationaryTable};

pub const MIN_BATCHES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("under-sampled run: {events} events cannot fill {batches} batches")]
    UnderSampled { events: u64, batches: usize },
    #[error("the run produced no events, so no cost rate can be estimated")]
    Empty,
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    /// Stop after this many events.
    Events(u64),
    /// Stop at this simulated time.
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    #[default]
    Deterministic,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartState {
    /// Initial population drawn from the stationary law.
    #[default]
    Stationary,
    /// Start with no nodes.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimPolicy {
    pub repair_from: RepairThreshold,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: SystemParams,
    pub scheme: Scheme,
    pub horizon: Horizon,
    pub seed: u64,
    pub policy: SimPolicy,
    pub batch_count: usize,
    pub start: StartState,
}

impl SimConfig {
    pub fn new(params: SystemParams, scheme: Scheme, horizon: Horizon, seed: u64) -> Self {
        Self {
            params,
            scheme,
            horizon,
            seed,
            policy: SimPolicy::default(),
            batch_count: 20,
            start: StartState::default(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.batch_count < MIN_BATCHES {
            return Err(SimError::InvalidConfig(format!(
                "batch_count must be at least {MIN_BATCHES}, got {}",
                self.batch_count
            )));
        }
        if let Horizon::Time(h) = self.horizon {
            if !(h.is_finite() && h >= 0.0) {
                return Err(SimError::InvalidConfig(format!("time horizon must be finite and nonnegative, got {h}")));
            }
        }
        if let Scheme::Replication { n: 0 } = self.scheme {
            return Err(CostError::InvalidReplication(0).into());
        }
        Ok(())
    }
}

/// Cost categories, in the order of the analytic terms C1..C6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// Base station seeds blocks after the file was lost from devices.
    Allocation,
    /// A newly arrived node receives a block.
    Redundancy,
    /// A departed storage node's block is regenerated.
    Repair,
    /// Request served by the base station.
    RemoteRetrieval,
    /// Request while every present node stores a block.
    StorageReconstruction,
    /// Request while more nodes are present than blocks exist (and, for
    /// simple caching, every device-served request).
    BulkReconstruction,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Allocation,
        Category::Redundancy,
        Category::Repair,
        Category::RemoteRetrieval,
        Category::StorageReconstruction,
        Category::BulkReconstruction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Allocation => "allocation",
            Category::Redundancy => "redundancy",
            Category::Repair => "repair",
            Category::RemoteRetrieval => "remote_retrieval",
            Category::StorageReconstruction => "storage_reconstruction",
            Category::BulkReconstruction => "bulk_reconstruction",
        }
    }
}

/// Time-weighted histogram of the node population.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Occupancy {
    time_in_state: Vec<f64>,
}

impl Occupancy {
    fn record(&mut self, state: u64, dt: f64) {
        let idx = state as usize;
        if idx >= self.time_in_state.len() {
            self.time_in_state.resize(idx + 1, 0.0);
        }
        self.time_in_state[idx] += dt;
    }

    pub fn time_in_state(&self) -> &[f64] {
        &self.time_in_state
    }

    /// Total-variation distance between the empirical occupancy and the
    /// stationary law.
    pub fn total_variation(&self, model: &PopulationModel) -> f64 {
        let total: f64 = self.time_in_state.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }
        let table = StationaryTable::new(model, 1e-15).expect("valid tolerance");
        let top = (self.time_in_state.len() as u64).max(table.window().i_max + 1);
        let mut covered = 0.0;
        let mut dist = 0.0;
        for i in 0..top {
            let empirical = self.time_in_state.get(i as usize).copied().unwrap_or(0.0) / total;
            let stationary = table.pmf(i);
            covered += stationary;
            dist += (empirical - stationary).abs();
        }
        0.5 * (dist + (1.0 - covered).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub elapsed_sim_time: f64,
    pub total_cost: f64,
    /// Indexed by [`Category::index`].
    pub cost_by_category: [f64; 6],
    pub events_by_category: [u64; 6],
    /// All simulated events, including arrivals and departures that cost nothing.
    pub total_events: u64,
    /// `total_cost / elapsed_sim_time`; `None` for an empty run.
    pub mean_cost_rate: Option<f64>,
    /// Batch-means 95% confidence half-width of the cost rate.
    pub ci_halfwidth_95: Option<f64>,
    /// Strict coupling only: fraction of time the block count differed from
    /// `min(i, n)` (or from zero below `k`).
    pub drift_diagnostic: Option<f64>,
    #[serde(skip)]
    pub occupancy: Occupancy,
}

impl SimReport {
    fn empty() -> Self {
        Self {
            elapsed_sim_time: 0.0,
            total_cost: 0.0,
            cost_by_category: [0.0; 6],
            events_by_category: [0; 6],
            total_events: 0,
            mean_cost_rate: None,
            ci_halfwidth_95: None,
            drift_diagnostic: None,
            occupancy: Occupancy::default(),
        }
    }

    pub fn category_rate(&self, category: Category) -> Option<f64> {
        (self.elapsed_sim_time > 0.0).then(|| self.cost_by_category[category.index()] / self.elapsed_sim_time)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Batch {
    cost: f64,
    time: f64,
}

enum Storage {
    BaseStationOnly,
    SimpleCaching { cacher_present: bool },
    Coded { layout: BlockLayout, blocks: u64 },
}

struct Run<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    nodes: u64,
    storage: Storage,
    time: f64,
    events: u64,
    cost: [f64; 6],
    counts: [u64; 6],
    batches: Vec<Batch>,
    occupancy: Occupancy,
    drift_time: f64,
}

impl Run<'_> {
    fn charge(&mut self, category: Category, amount: f64, batch: usize) {
        self.cost[category.index()] += amount;
        self.counts[category.index()] += 1;
        self.batches[batch].cost += amount;
    }

    fn coupled_blocks(layout: &BlockLayout, nodes: u64) -> u64 {
        if nodes >= u64::from(layout.k) {
            nodes.min(u64::from(layout.n))
        } else {
            0
        }
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Accrues holding time to the event's batch, or for a time horizon
    /// splits it across the fixed-length batch slots it overlaps.
    fn hold(&mut self, dt: f64, event_batch: Option<usize>) {
        self.occupancy.record(self.nodes, dt);
        if let Storage::Coded { layout, blocks } = &self.storage {
            if self.config.policy.coupling == Coupling::Strict && *blocks != Self::coupled_blocks(layout, self.nodes) {
                self.drift_time += dt;
            }
        }
        match (event_batch, self.config.horizon) {
            (Some(b), _) => self.batches[b].time += dt,
            (None, Horizon::Time(h)) => {
                let count = self.batches.len();
                let slot = h / count as f64;
                let end = self.time + dt;
                let mut t = self.time;
                let mut b = time_batch(t, slot, count);
                while t < end {
                    let slot_end = if b + 1 == count { end } else { (slot * (b + 1) as f64).min(end) };
                    self.batches[b].time += (slot_end - t).max(0.0);
                    t = slot_end;
                    b = (b + 1).min(count - 1);
                }
            }
            (None, Horizon::Events(_)) => unreachable!("event horizons always pass a batch"),
        }
        self.time += dt;
    }

    fn step(&mut self, batch: usize) {
        let p = self.config.params;
        let arrival = p.expected_nodes() * p.departure_rate();
        let departure = self.nodes as f64 * p.departure_rate();
        let request = self.nodes as f64 * p.request_rate();
        let u = self.uniform() * (arrival + departure + request);
        if u < arrival {
            self.on_arrival(batch);
            self.nodes += 1;
        } else if u < arrival + departure {
            self.on_departure(batch);
            self.nodes -= 1;
        } else {
            self.on_request(batch);
        }
        self.events += 1;
    }

    fn on_arrival(&mut self, batch: usize) {
        let i = self.nodes;
        let r = self.config.params.cost_ratio();
        let strict = self.config.policy.coupling == Coupling::Strict;
        let Storage::Coded { layout, blocks } = self.storage else {
            return;
        };
        let (n, k) = (u64::from(layout.n), u64::from(layout.k));
        let kf = f64::from(layout.k);
        if !strict {
            if i + 1 == k {
                self.charge(Category::Allocation, r * kf * layout.alpha, batch);
            } else if i >= k && i < n {
                self.charge(Category::Redundancy, layout.redundancy_cost(i), batch);
            }
            return;
        }
        let mut blocks = blocks;
        if blocks >= k {
            if blocks < n {
                self.charge(Category::Redundancy, layout.redundancy_cost(blocks), batch);
                blocks += 1;
            }
        } else if i + 1 >= k {
            // File not decodable from devices: the base station supplies the
            // missing blocks so that k nodes hold one each.
            let missing = (k - blocks) as f64;
            self.charge(Category::Allocation, r * missing * layout.alpha, batch);
            blocks = k;
        }
        self.storage = Storage::Coded { layout, blocks };
    }

    fn on_departure(&mut self, batch: usize) {
        let i = self.nodes;
        let strict = self.config.policy.coupling == Coupling::Strict;
        let repair_from = self.config.policy.repair_from;
        match self.storage {
            Storage::BaseStationOnly => {}
            Storage::SimpleCaching { cacher_present } => {
                if cacher_present && self.uniform() < 1.0 / i as f64 {
                    self.storage = Storage::SimpleCaching { cacher_present: false };
                }
            }
            Storage::Coded { layout, blocks } => {
                let n = u64::from(layout.n);
                let first_repair = repair_from.first_state(layout.n);
                if !strict {
                    if i >= first_repair && self.uniform() < n as f64 / i as f64 {
                        self.charge(Category::Repair, layout.gamma, batch);
                    }
                    return;
                }
                let mut blocks = blocks;
                if self.uniform() < blocks as f64 / i as f64 {
                    blocks -= 1;
                    let remaining = i - 1;
                    let decodable = blocks >= u64::from(layout.k);
                    if i >= first_repair && remaining > blocks && decodable {
                        self.charge(Category::Repair, layout.redundancy_cost(blocks), batch);
                        blocks += 1;
                    }
                }
                self.storage = Storage::Coded { layout, blocks };
            }
        }
    }

    fn on_request(&mut self, batch: usize) {
        let i = self.nodes;
        let r = self.config.params.cost_ratio();
        let strict = self.config.policy.coupling == Coupling::Strict;
        match self.storage {
            Storage::BaseStationOnly => self.charge(Category::RemoteRetrieval, r, batch),
            Storage::SimpleCaching { cacher_present } => {
                let is_cacher = self.uniform() < 1.0 / i as f64;
                if !cacher_present {
                    self.charge(Category::RemoteRetrieval, r, batch);
                    self.storage = Storage::SimpleCaching { cacher_present: true };
                } else if !is_cacher {
                    self.charge(Category::BulkReconstruction, 1.0, batch);
                }
            }
            Storage::Coded { layout, blocks } => {
                let (n, k) = (u64::from(layout.n), u64::from(layout.k));
                let kf = f64::from(layout.k);
                let stored = if strict { blocks } else { Self::coupled_blocks(&layout, i) };
                if stored < k {
                    self.charge(Category::RemoteRetrieval, r, batch);
                    return;
                }
                let category = if i <= n { Category::StorageReconstruction } else { Category::BulkReconstruction };
                let holds_block = if !strict && i <= n {
                    true
                } else {
                    self.uniform() < stored as f64 / i as f64
                };
                let needed = if holds_block { kf - 1.0 } else { kf };
                self.charge(category, needed * layout.alpha, batch);
            }
        }
    }
}

fn time_batch(t: f64, slot: f64, count: usize) -> usize {
    ((t / slot) as usize).min(count - 1)
}

fn student_t_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Runs one simulation. Identical configs give bit-identical reports.
pub fn simulate(config: &SimConfig) -> Result<SimReport, SimError> {
    config.validate()?;
    match config.horizon {
        Horizon::Events(0) => return Ok(SimReport::empty()),
        Horizon::Time(0.0) => return Ok(SimReport::empty()),
        Horizon::Events(e) if e < config.batch_count as u64 => {
            return Err(SimError::UnderSampled {
                events: e,
                batches: config.batch_count,
            })
        }
        _ => {}
    }

    let params = config.params;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nodes = match config.start {
        StartState::Stationary => {
            let draw: f64 = Poisson::new(params.expected_nodes()).expect("positive mean").sample(&mut rng);
            draw as u64
        }
        StartState::Empty => 0,
    };
    let storage = match config.scheme {
        Scheme::BaseStationOnly => Storage::BaseStationOnly,
        Scheme::SimpleCaching => Storage::SimpleCaching { cacher_present: nodes > 0 },
        other => {
            let layout = other.layout()?.expect("coded schemes have a layout");
            Storage::Coded {
                layout,
                blocks: Run::coupled_blocks(&layout, nodes),
            }
        }
    };
    let mut run = Run {
        config,
        rng,
        nodes,
        storage,
        time: 0.0,
        events: 0,
        cost: [0.0; 6],
        counts: [0; 6],
        batches: vec![Batch::default(); config.batch_count],
        occupancy: Occupancy::default(),
        drift_time: 0.0,
    };

    let batch_count = config.batch_count;
    let arrival = params.expected_nodes() * params.departure_rate();
    match config.horizon {
        Horizon::Events(total) => {
            for e in 0..total {
                let batch = (u128::from(e) * batch_count as u128 / u128::from(total)) as usize;
                let rate = arrival + run.nodes as f64 * (params.departure_rate() + params.request_rate());
                let dt: f64 = Exp1.sample(&mut run.rng);
                run.hold(dt / rate, Some(batch));
                run.step(batch);
            }
        }
        Horizon::Time(h) => {
            let slot = h / batch_count as f64;
            loop {
                let rate = arrival + run.nodes as f64 * (params.departure_rate() + params.request_rate());
                let dt: f64 = Exp1.sample(&mut run.rng);
                let dt = dt / rate;
                if run.time + dt >= h {
                    let rest = h - run.time;
                    run.hold(rest, None);
                    break;
                }
                run.hold(dt, None);
                let batch = time_batch(run.time, slot, batch_count);
                run.step(batch);
            }
            if run.events < batch_count as u64 {
                return Err(SimError::UnderSampled {
                    events: run.events,
                    batches: batch_count,
                });
            }
        }
    }

    let total_cost: f64 = run.cost.iter().sum();
    let elapsed = run.time;
    let rates: Vec<f64> = run
        .batches
        .iter()
        .map(|b| if b.time > 0.0 { b.cost / b.time } else { 0.0 })
        .collect();
    let m = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / m;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let halfwidth = student_t_975(rates.len() - 1) * (var / m).sqrt();
    let drift = match (&run.storage, config.policy.coupling) {
        (Storage::Coded { .. }, Coupling::Strict) if elapsed > 0.0 => Some(run.drift_time / elapsed),
        _ => None,
    };

    Ok(SimReport {
        elapsed_sim_time: elapsed,
        total_cost,
        cost_by_category: run.cost,
        events_by_category: run.counts,
        total_events: run.events,
        mean_cost_rate: (elapsed > 0.0).then(|| total_cost / elapsed),
        ci_halfwidth_95: Some(halfwidth),
        drift_diagnostic: drift,
        occupancy: run.occupancy,
    })
}

/// Simulated versus closed-form cost rate for one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub analytic_rate: f64,
    pub empirical_rate: f64,
    pub relative_error: f64,
    pub ci_halfwidth_95: f64,
    pub analytic_in_ci: bool,
    /// Closed-form C1..C6 for schemes that store blocks.
    pub analytic_terms: Option<CostBreakdown>,
    /// Empirical cost rate per category.
    pub empirical_terms: [f64; 6],
    pub report: SimReport,
}

pub fn compare_to_analytic(config: &SimConfig) -> Result<Comparison, SimError> {
    let report = simulate(config)?;
    let empirical_rate = report.mean_cost_rate.ok_or(SimError::Empty)?;
    let model = CostModel::for_params(
        &config.params,
        CostOptions {
            repair_from: config.policy.repair_from,
        },
    )?;
    let analytic_rate = model.scheme_total(&config.params, &config.scheme)?;
    let analytic_terms = model.scheme_breakdown(&config.params, &config.scheme)?;
    let relative_error = if analytic_rate > 0.0 {
        (empirical_rate - analytic_rate).abs() / analytic_rate
    } else {
        empirical_rate.abs()
    };
    let ci = report.ci_halfwidth_95.unwrap_or(0.0);
    let empirical_terms = report.cost_by_category.map(|c| c / report.elapsed_sim_time);
    Ok(Comparison {
        analytic_rate,
        empirical_rate,
        relative_error,
        ci_halfwidth_95: ci,
        analytic_in_ci: (empirical_rate - analytic_rate).abs() <= ci,
        analytic_terms,
        empirical_terms,
        report,
    })
}
