use std::fs;
use std::io::Write;

use d2dcache::codes::{validate_against_population, CodeFlavor, CodeParams};
use d2dcache::cost_model::{CostError, CostModel, CostOptions, RepairThreshold, Scheme, SystemParams};
use d2dcache::planner::{log_grid, sweep_p, threshold_surface, Crossing, DesignSpace, PlanError, Planner, SchemeKind};
use d2dcache::simulator::{compare_to_analytic, simulate, Category, Coupling, Horizon, SimConfig, SimError, StartState};
use thiserror::Error;

use crate::args::Command;
use crate::config::{ConfigError, CouplingName, ExperimentConfig, RepairFrom, SchemeName};
use crate::output::{Cell, Table};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNDER_SAMPLED: i32 = 3;
pub const EXIT_NO_CROSSING: i32 = 4;

const DEFAULT_EVENTS: u64 = 1_000_000;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_POINTS: usize = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    UnderSampled(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::UnderSampled(_) => EXIT_UNDER_SAMPLED,
            CliError::Io(_) => EXIT_OTHER,
        }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(format!("config: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnderSampled { .. } | SimError::Empty => CliError::UnderSampled(e.to_string()),
            SimError::InvalidConfig(_) | SimError::Cost(_) => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn missing(flag: &str) -> CliError {
    CliError::Invalid(format!("missing required setting --{flag}"))
}

/// Table plus the exit status to report once it is written.
pub struct Report {
    pub table: Table,
    pub status: i32,
}

impl Report {
    fn ok(table: Table) -> Self {
        Self { table, status: 0 }
    }
}

/// Config file (if any) overlaid with the command-line flags.
pub fn resolve(command: &Command) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match command.config_path() {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    cfg.overlay(command.flags());
    Ok(cfg)
}

pub fn execute(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = resolve(command)?;
    let report = match command {
        Command::Costs(_) => costs(&cfg, stderr)?,
        Command::Simulate(_) => simulate_cmd(&cfg, stderr)?,
        Command::Sweep(_) => sweep(&cfg)?,
        Command::Thresholds(_) => thresholds(&cfg)?,
    };
    let format = cfg.format.unwrap_or_default();
    match &cfg.out {
        Some(path) => {
            let mut buf = Vec::new();
            report.table.write(format, &mut buf)?;
            fs::write(path, buf).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        }
        None => report.table.write(format, stdout)?,
    }
    Ok(report.status)
}

pub fn system_params(cfg: &ExperimentConfig) -> Result<SystemParams, CliError> {
    let n = cfg.expected_nodes.ok_or_else(|| missing("N"))?;
    let r = cfg.cost_ratio.ok_or_else(|| missing("R"))?;
    let lambda = cfg.lambda.unwrap_or(1.0);
    Ok(match (cfg.p, cfg.omega) {
        (Some(p), None) => SystemParams::with_popularity(n, lambda, p, r)?,
        (None, Some(omega)) => SystemParams::new(n, lambda, omega, r)?,
        (Some(_), Some(_)) => return Err(CliError::Invalid("give either --p or --omega, not both".into())),
        (None, None) => return Err(missing("p")),
    })
}

fn storage_nodes(cfg: &ExperimentConfig) -> u32 {
    cfg.n.unwrap_or(30)
}

fn repair_degree(cfg: &ExperimentConfig) -> u32 {
    cfg.d.unwrap_or(10)
}

fn design_space(cfg: &ExperimentConfig) -> Result<DesignSpace, CliError> {
    Ok(DesignSpace::new(storage_nodes(cfg), repair_degree(cfg))?)
}

fn coded(flavor: CodeFlavor, code: CodeParams) -> Scheme {
    match flavor {
        CodeFlavor::Mbr => Scheme::Mbr(code),
        CodeFlavor::Msr => Scheme::Msr(code),
    }
}

pub fn scheme(cfg: &ExperimentConfig, name: SchemeName) -> Result<Scheme, CliError> {
    let flavor = match name {
        SchemeName::SimpleCaching => return Ok(Scheme::SimpleCaching),
        SchemeName::BaseStation => return Ok(Scheme::BaseStationOnly),
        SchemeName::Replication => {
            let s = Scheme::Replication { n: storage_nodes(cfg) };
            s.validate()?;
            return Ok(s);
        }
        SchemeName::Mbr => CodeFlavor::Mbr,
        SchemeName::Msr => CodeFlavor::Msr,
    };
    let k = cfg.k.ok_or_else(|| missing("k"))?;
    let code = CodeParams::new(storage_nodes(cfg), k, repair_degree(cfg)).map_err(CostError::from)?;
    let s = coded(flavor, code);
    s.validate()?;
    Ok(s)
}

fn repair_threshold(cfg: &ExperimentConfig) -> RepairThreshold {
    match cfg.repair_from {
        Some(RepairFrom::NPlusOne) => RepairThreshold::NPlusOne,
        Some(RepairFrom::NPlusTwo) | None => RepairThreshold::NPlusTwo,
    }
}

fn warn_population(scheme: &Scheme, params: &SystemParams, stderr: &mut dyn Write) -> Result<(), CliError> {
    let code = match scheme {
        Scheme::Mbr(c) | Scheme::Msr(c) => *c,
        // n = 1 cannot form CodeParams and never trips the n <= N/10 rule for N >= 10
        Scheme::Replication { n } if *n >= 2 => CodeParams::new(*n, 1, 1).map_err(CostError::from)?,
        _ => return Ok(()),
    };
    for w in validate_against_population(&code, params.expected_nodes()) {
        writeln!(stderr, "warning: {w}")?;
    }
    Ok(())
}

const TERMS: [&str; 6] = [
    "allocation",
    "redundancy",
    "repair",
    "remote_retrieval",
    "storage_reconstruction",
    "bulk_reconstruction",
];

fn costs(cfg: &ExperimentConfig, stderr: &mut dyn Write) -> Result<Report, CliError> {
    let params = system_params(cfg)?;
    let model = CostModel::for_params(&params, CostOptions { repair_from: repair_threshold(cfg) })?;
    let schemes = if cfg.all.unwrap_or(false) {
        let space = design_space(cfg)?;
        let planner = Planner::new(params.expected_nodes(), params.cost_ratio(), params.departure_rate(), space)?
            .with_options(model.options())?;
        let mut out = vec![Scheme::SimpleCaching, Scheme::BaseStationOnly];
        for (flavor, name) in [(CodeFlavor::Mbr, SchemeName::Mbr), (CodeFlavor::Msr, SchemeName::Msr)] {
            out.push(match cfg.k {
                Some(_) => scheme(cfg, name)?,
                None => {
                    let (k, _) = planner.best_k(&params, flavor)?;
                    let code = CodeParams::new(space.n(), k, space.d()).map_err(CostError::from)?;
                    coded(flavor, code)
                }
            });
        }
        out.push(scheme(cfg, SchemeName::Replication)?);
        out
    } else {
        vec![scheme(cfg, cfg.scheme.ok_or_else(|| missing("scheme"))?)?]
    };

    let mut table = Table::new(["scheme", "n", "k", "d", "alpha", "gamma"].into_iter().chain(TERMS).chain(["total"]));
    for s in &schemes {
        warn_population(s, &params, stderr)?;
        let (n, k, d, alpha, gamma) = match s {
            Scheme::Mbr(_) | Scheme::Msr(_) => {
                let l = s.layout()?.expect("coded scheme");
                (Cell::from(l.n), Cell::from(l.k), Cell::from(l.d), Cell::from(l.alpha), Cell::from(l.gamma))
            }
            Scheme::Replication { n } => (Cell::from(*n), Cell::from(1u32), Cell::Empty, Cell::from(1.0), Cell::from(1.0)),
            _ => (Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty),
        };
        let mut row = vec![Cell::from(s.name()), n, k, d, alpha, gamma];
        match model.scheme_breakdown(&params, s)? {
            Some(b) => {
                row.extend(b.terms().map(Cell::from));
                row.push(b.total.into());
            }
            None => {
                row.extend(std::iter::repeat_n(Cell::Empty, 6));
                row.push(model.scheme_total(&params, s)?.into());
            }
        }
        table.push(row);
    }
    Ok(Report::ok(table))
}

fn simulate_cmd(cfg: &ExperimentConfig, stderr: &mut dyn Write) -> Result<Report, CliError> {
    let params = system_params(cfg)?;
    let scheme = scheme(cfg, cfg.scheme.ok_or_else(|| missing("scheme"))?)?;
    warn_population(&scheme, &params, stderr)?;
    let horizon = match (cfg.events, cfg.horizon) {
        (Some(e), None) => Horizon::Events(e),
        (None, Some(h)) => Horizon::Time(h),
        (None, None) => Horizon::Events(DEFAULT_EVENTS),
        (Some(_), Some(_)) => return Err(CliError::Invalid("give either --events or --horizon, not both".into())),
    };
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let mut sim = SimConfig::new(params, scheme, horizon, seed);
    if let Some(b) = cfg.batches {
        sim.batch_count = b;
    }
    sim.policy.repair_from = repair_threshold(cfg);
    sim.policy.coupling = match cfg.coupling {
        Some(CouplingName::Strict) => Coupling::Strict,
        Some(CouplingName::Deterministic) | None => Coupling::Deterministic,
    };
    if cfg.cold_start.unwrap_or(false) {
        sim.start = StartState::Empty;
    }

    let compare = cfg.compare_analytic.unwrap_or(false);
    let (report, comparison) = if compare {
        let c = compare_to_analytic(&sim)?;
        (c.report.clone(), Some(c))
    } else {
        (simulate(&sim)?, None)
    };

    let mut columns: Vec<String> = [
        "scheme",
        "seed",
        "events",
        "elapsed_sim_time",
        "total_cost",
        "mean_cost_rate",
        "ci_halfwidth_95",
        "drift_diagnostic",
    ]
    .map(String::from)
    .to_vec();
    columns.extend(Category::ALL.iter().map(|c| format!("cost_{}", c.name())));
    columns.extend(Category::ALL.iter().map(|c| format!("events_{}", c.name())));
    let mut row = vec![
        Cell::from(scheme.name()),
        Cell::from(seed),
        Cell::from(report.total_events),
        Cell::from(report.elapsed_sim_time),
        Cell::from(report.total_cost),
        Cell::from(report.mean_cost_rate),
        Cell::from(report.ci_halfwidth_95),
        Cell::from(report.drift_diagnostic),
    ];
    row.extend(report.cost_by_category.map(Cell::from));
    row.extend(report.events_by_category.map(Cell::from));
    if let Some(c) = &comparison {
        columns.extend(["analytic_rate", "relative_error", "analytic_in_ci"].map(String::from));
        columns.extend(Category::ALL.iter().map(|c| format!("rate_{}", c.name())));
        columns.extend(Category::ALL.iter().map(|c| format!("analytic_{}", c.name())));
        row.extend([c.analytic_rate.into(), c.relative_error.into(), c.analytic_in_ci.into()]);
        row.extend(c.empirical_terms.map(Cell::from));
        match &c.analytic_terms {
            Some(b) => row.extend(b.terms().map(Cell::from)),
            None => row.extend(std::iter::repeat_n(Cell::Empty, 6)),
        }
    }
    let mut table = Table::new(columns);
    table.push(row);
    Ok(Report::ok(table))
}

fn sweep(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let n = cfg.expected_nodes.ok_or_else(|| missing("N"))?;
    let r = cfg.cost_ratio.ok_or_else(|| missing("R"))?;
    let space = design_space(cfg)?;
    if cfg.by_k.unwrap_or(false) {
        let p = cfg.p.ok_or_else(|| missing("p"))?;
        let planner = Planner::new(n, r, 1.0, space)?;
        let params = planner.params(p)?;
        let sc = planner.kind_cost(&params, SchemeKind::SimpleCaching)?;
        let rep = planner.kind_cost(&params, SchemeKind::Replication)?;
        let mut table = Table::new(["p", "scheme", "k", "cost", "relative_cost"]);
        table.push(vec![p.into(), "simple-caching".into(), Cell::Empty, sc.into(), 1.0.into()]);
        for (flavor, k, cost) in planner.by_k(p)? {
            let name = match flavor {
                CodeFlavor::Mbr => "mbr",
                CodeFlavor::Msr => "msr",
            };
            table.push(vec![p.into(), name.into(), k.into(), cost.into(), (cost / sc).into()]);
        }
        table.push(vec![p.into(), "replication".into(), Cell::Empty, rep.into(), (rep / sc).into()]);
        return Ok(Report::ok(table));
    }

    let grid = match (cfg.p, cfg.p_from, cfg.p_to) {
        (Some(p), None, None) => vec![p],
        (None, Some(from), Some(to)) => {
            let points = cfg.points.unwrap_or(DEFAULT_POINTS);
            if points == 0 {
                return Err(CliError::Invalid("--points must be at least 1".into()));
            }
            log_grid(from, to, points)
        }
        (None, None, None) => return Err(missing("p-from/--p-to")),
        (Some(_), _, _) => return Err(CliError::Invalid("give either --p or --p-from/--p-to, not both".into())),
        _ => return Err(CliError::Invalid("--p-from and --p-to go together".into())),
    };
    let rows = sweep_p(r, n, &space, &grid)?;
    let mut table = Table::new([
        "p",
        "cost_sc",
        "cost_mbr_best",
        "k_mbr",
        "cost_msr_best",
        "k_msr",
        "cost_rep",
        "best_scheme",
        "rel_mbr",
        "rel_msr",
        "rel_rep",
    ]);
    for row in rows {
        table.push(vec![
            row.p.into(),
            row.cost_sc.into(),
            row.cost_mbr_best.into(),
            row.k_mbr.into(),
            row.cost_msr_best.into(),
            row.k_msr.into(),
            row.cost_rep.into(),
            row.best_scheme.name().into(),
            (row.cost_mbr_best / row.cost_sc).into(),
            (row.cost_msr_best / row.cost_sc).into(),
            (row.cost_rep / row.cost_sc).into(),
        ]);
    }
    Ok(Report::ok(table))
}

fn crossing_cells(c: &Crossing) -> [Cell; 2] {
    [c.p().into(), (c.crossings() as u64).into()]
}

fn thresholds(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let r_grid = cfg.r_grid.as_deref().ok_or_else(|| missing("R-grid"))?;
    let n_grid = cfg.n_grid.as_deref().ok_or_else(|| missing("N-grid"))?;
    let space = design_space(cfg)?;
    let cells = threshold_surface(r_grid, n_grid, &space);

    let mut table = Table::new([
        "R",
        "N",
        "p1",
        "p1_crossings",
        "p2",
        "p2_crossings",
        "p3",
        "p3_crossings",
        "error",
    ]);
    let pairs = r_grid.iter().flat_map(|&r| n_grid.iter().map(move |&n| (r, n)));
    let mut any_crossing = false;
    let mut first_error = None;
    for ((r, n), cell) in pairs.zip(&cells) {
        let mut row = vec![Cell::from(r), Cell::from(n)];
        match cell {
            Ok(s) => {
                let t = s.thresholds;
                any_crossing |= [t.p1, t.p2, t.p3].iter().any(|c| c.p().is_some());
                for c in [t.p1, t.p2, t.p3] {
                    row.extend(crossing_cells(&c));
                }
                row.push(Cell::Empty);
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.clone());
                row.extend(std::iter::repeat_n(Cell::Empty, 6));
                row.push(e.to_string().into());
            }
        }
        table.push(row);
    }
    if cells.iter().all(Result::is_err) {
        return Err(first_error.expect("grids are nonempty").into());
    }
    let status = if any_crossing { 0 } else { EXIT_NO_CROSSING };
    Ok(Report { table, status })
}
