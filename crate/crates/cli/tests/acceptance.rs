//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS or FAIL line; the process fails if any
//! criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use d2dcache::codes::{mbr_point, msr_point, CodeParams};
use d2dcache::cost_model::{
    cost_base_station_only, cost_regenerating, cost_replication, cost_simple_caching, Scheme, SystemParams,
};
use d2dcache::markov::{event_rate_normalizer, Normalizer, PopulationModel};
use d2dcache::planner::{log_grid, sweep_p, threshold_surface, DesignSpace, Planner, SchemeKind};
use d2dcache::simulator::{compare_to_analytic, simulate, Horizon, SimConfig};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, Poisson};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn code(n: u32, k: u32, d: u32) -> CodeParams {
    CodeParams::new(n, k, d).unwrap()
}

fn code_points() -> Outcome {
    let c = code(30, 7, 10);
    let mbr = mbr_point(1.0, &c).unwrap();
    let msr = msr_point(1.0, &c).unwrap();
    ensure(mbr.alpha_fraction() == Ratio::new(10, 49) && mbr.gamma_fraction() == Ratio::new(10, 49), || {
        format!("mbr (7,10) = ({}, {})", mbr.alpha_fraction(), mbr.gamma_fraction())
    })?;
    ensure(msr.alpha_fraction() == Ratio::new(1, 7) && msr.gamma_fraction() == Ratio::new(5, 14), || {
        format!("msr (7,10) = ({}, {})", msr.alpha_fraction(), msr.gamma_fraction())
    })?;
    for k in 2..=10 {
        let p = msr_point(1.0, &code(30, k, k)).unwrap();
        ensure(p.gamma_fraction() == Ratio::from_integer(1), || format!("msr d=k={k}: gamma {}", p.gamma_fraction()))?;
    }
    Ok("mbr 10/49, msr 1/7 and 5/14, d=k repairs one file".into())
}

fn caching_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let draws = 10_000;
    let mut violations = Vec::new();
    for _ in 0..draws {
        let r = 200.0 - 199.0 * rng.random::<f64>();
        let n = (2f64.ln() + (1e5f64 / 2.0).ln() * rng.random::<f64>()).exp();
        let p = (1e-5f64.ln() + 1e7f64.ln() * rng.random::<f64>()).exp();
        let params = SystemParams::with_popularity(n, 1.0, p, r).unwrap();
        let sc = cost_simple_caching(&params).unwrap();
        // λ = 1, so ω = p.
        let below = sc < r * n * p;
        if !below {
            violations.push((r, n, p, sc));
        }
    }
    ensure(violations.is_empty(), || format!("{} violations, first {:?}", violations.len(), violations[0]))?;
    Ok(format!("{draws} draws, 0 violations"))
}

fn scale_invariance() -> Outcome {
    let schemes = [
        Scheme::SimpleCaching,
        Scheme::BaseStationOnly,
        Scheme::Mbr(code(30, 7, 10)),
        Scheme::Msr(code(30, 5, 10)),
        Scheme::Replication { n: 30 },
    ];
    let total = |scheme: &Scheme, params: &SystemParams| -> f64 {
        match scheme {
            Scheme::SimpleCaching => cost_simple_caching(params).unwrap(),
            Scheme::BaseStationOnly => cost_base_station_only(params),
            Scheme::Mbr(c) => cost_regenerating(params, c, &mbr_point(1.0, c).unwrap()).unwrap().total,
            Scheme::Msr(c) => cost_regenerating(params, c, &msr_point(1.0, c).unwrap()).unwrap().total,
            Scheme::Replication { n } => cost_replication(params, *n).unwrap().total,
        }
    };
    let mut worst: f64 = 0.0;
    for scheme in &schemes {
        for (n, p) in [(20.0, 0.5), (100.0, 0.005), (1000.0, 0.1), (1000.0, 3.0)] {
            let per_lambda: Vec<f64> = [0.01, 1.0, 100.0]
                .iter()
                .map(|&l| total(scheme, &SystemParams::with_popularity(n, l, p, 20.0).unwrap()) / l)
                .collect();
            for v in &per_lambda[1..] {
                let rel = (v / per_lambda[0] - 1.0).abs();
                worst = worst.max(rel);
                ensure(rel <= 1e-9, || format!("{scheme:?} N={n} p={p}: {per_lambda:?}"))?;
            }
        }
    }
    Ok(format!("worst relative spread {worst:.1e}"))
}

fn per_k_argmin() -> Outcome {
    let params = SystemParams::with_popularity(1000.0, 1.0, 0.005, 20.0).unwrap();
    let mut candidates = vec![("simple-caching", 0, cost_simple_caching(&params).unwrap())];
    for k in 2..=10 {
        let c = code(30, k, 10);
        candidates.push(("mbr", k, cost_regenerating(&params, &c, &mbr_point(1.0, &c).unwrap()).unwrap().total));
        candidates.push(("msr", k, cost_regenerating(&params, &c, &msr_point(1.0, &c).unwrap()).unwrap().total));
    }
    candidates.push(("replication", 0, cost_replication(&params, 30).unwrap().total));
    let best = candidates.iter().min_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
    ensure((best.0, best.1) == ("mbr", 7), || format!("argmin {best:?}"))?;
    ensure(best.2 < candidates[0].2, || format!("{} not below caching {}", best.2, candidates[0].2))?;

    let planner = Planner::new(1000.0, 20.0, 1.0, DesignSpace::new(30, 10).unwrap()).unwrap();
    let (scheme, cost) = planner.best_method(&params).unwrap();
    ensure(scheme == Scheme::Mbr(code(30, 7, 10)) && cost == best.2, || format!("planner picked {scheme:?} at {cost}"))?;
    Ok(format!("mbr k=7 at {:.6} vs caching {:.6}", best.2, candidates[0].2))
}

fn regime_ordering() -> Outcome {
    let rows = sweep_p(20.0, 1000.0, &DesignSpace::new(30, 10).unwrap(), &log_grid(1e-4, 10.0, 400)).unwrap();
    let mut regimes: Vec<(SchemeKind, usize)> = Vec::new();
    for row in &rows {
        match regimes.last_mut() {
            Some((kind, count)) if *kind == row.best_scheme => *count += 1,
            _ => regimes.push((row.best_scheme, 1)),
        }
    }
    let order: Vec<SchemeKind> = regimes.iter().map(|r| r.0).collect();
    let want = [SchemeKind::SimpleCaching, SchemeKind::Mbr, SchemeKind::Msr, SchemeKind::Replication];
    ensure(order == want, || format!("regimes {regimes:?}"))?;
    Ok(regimes.iter().map(|(k, c)| format!("{} x{c}", k.name())).collect::<Vec<_>>().join(" -> "))
}

fn threshold_fits() -> Outcome {
    let r_grid = [20.0, 60.0, 100.0, 140.0, 180.0];
    let n_grid = [1e2, 1e3, 1e4];
    let rows: Vec<_> = threshold_surface(&r_grid, &n_grid, &DesignSpace::new(30, 10).unwrap())
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let cell = |ri: usize, ni: usize| &rows[ri * n_grid.len() + ni];
    let mut p3s = Vec::new();
    let mut p1 = vec![vec![0.0; n_grid.len()]; r_grid.len()];
    for (ri, r) in r_grid.iter().enumerate() {
        for (ni, n) in n_grid.iter().enumerate() {
            let t = cell(ri, ni).thresholds;
            let (Some(a), Some(b), Some(c)) = (t.p1.p(), t.p2.p(), t.p3.p()) else {
                return Err(format!("missing threshold at R={r} N={n}: {t:?}"));
            };
            let ratio = b / (10.0 / n);
            ensure((0.5..=2.0).contains(&ratio), || format!("p2={b} at N={n} is {ratio:.3} x 10/N"))?;
            ensure((c - 0.90).abs() <= 0.05, || format!("p3={c} at R={r} N={n}"))?;
            p3s.push(c);
            p1[ri][ni] = a;
        }
    }
    let spread = p3s.iter().cloned().fold(f64::MIN, f64::max) - p3s.iter().cloned().fold(f64::MAX, f64::min);
    ensure(spread <= 0.1, || format!("p3 spread {spread}"))?;
    for ri in 0..r_grid.len() {
        for ni in 0..n_grid.len() {
            if ri + 1 < r_grid.len() {
                ensure(p1[ri + 1][ni] <= p1[ri][ni], || format!("p1 rises with R at N={}: {:?}", n_grid[ni], p1))?;
            }
            if ni + 1 < n_grid.len() {
                ensure(p1[ri][ni + 1] <= p1[ri][ni], || format!("p1 rises with N at R={}: {:?}", r_grid[ri], p1))?;
            }
        }
    }
    let p1_ref = p1[0][1];
    ensure(p1_ref < 0.005, || format!("p1(20, 1000) = {p1_ref}"))?;
    Ok(format!("p1(20,1000)={p1_ref:.3e}, p3 spread {spread:.2e}"))
}

fn simulator_agreement() -> Outcome {
    let schemes = [
        Scheme::SimpleCaching,
        Scheme::Mbr(code(30, 7, 10)),
        Scheme::Msr(code(30, 5, 10)),
        Scheme::Replication { n: 30 },
    ];
    let events = 20_000_000;
    let mut worst_total: f64 = 0.0;
    let mut worst_term: f64 = 0.0;
    let mut seed = 700;
    for scheme in schemes {
        for p in [0.005, 0.1, 1.0] {
            seed += 1;
            let params = SystemParams::with_popularity(1000.0, 1.0, p, 20.0).unwrap();
            let c = compare_to_analytic(&SimConfig::new(params, scheme, Horizon::Events(events), seed))
                .map_err(|e| e.to_string())?;
            worst_total = worst_total.max(c.relative_error);
            ensure(c.relative_error <= 0.05, || {
                format!("{scheme:?} p={p}: {} vs {}", c.empirical_rate, c.analytic_rate)
            })?;
            let Some(terms) = c.analytic_terms else { continue };
            for (i, (a, e)) in terms.terms().iter().zip(c.empirical_terms).enumerate() {
                // Terms many orders below the total are never sampled.
                if *a >= 1e-6 * c.analytic_rate {
                    let rel = (e / a - 1.0).abs();
                    worst_term = worst_term.max(rel);
                    ensure(rel <= 0.10, || format!("{scheme:?} p={p} term {}: {e} vs {a}", i + 1))?;
                } else {
                    ensure(e <= 1e-3 * c.analytic_rate, || format!("{scheme:?} p={p} term {}: {e} vs {a}", i + 1))?;
                }
            }
        }
    }
    Ok(format!("12 configs at {events} events, worst total {worst_total:.4}, worst term {worst_term:.4}"))
}

fn stationarity() -> Outcome {
    let n = 1000.0;
    let events = 50_000_000;
    let params = SystemParams::with_popularity(n, 1.0, 0.005, 20.0).unwrap();
    let report = simulate(&SimConfig::new(params, Scheme::Mbr(code(30, 7, 10)), Horizon::Events(events), 800))
        .map_err(|e| e.to_string())?;
    let time = report.occupancy.time_in_state();
    let total: f64 = time.iter().sum();
    let poisson = Poisson::new(n).unwrap();
    let mut dist = 0.0;
    let mut covered = 0.0;
    for (i, t) in time.iter().enumerate() {
        let pi = poisson.pmf(i as u64);
        covered += pi;
        dist += (t / total - pi).abs();
    }
    let tv = 0.5 * (dist + (1.0 - covered).max(0.0));
    ensure(tv < 0.01, || format!("total variation {tv} at {events} events"))?;
    Ok(format!("total variation {tv:.4} at {events} events"))
}

fn normalizer() -> Outcome {
    let mut notes = Vec::new();
    for (n, bound) in [(1e3, 1e-3), (1e2, 1e-2)] {
        let model = PopulationModel::new(n, 1.0).unwrap();
        let ratio = event_rate_normalizer(&model, Normalizer::Exact) / event_rate_normalizer(&model, Normalizer::Asymptotic);
        let poisson = Poisson::new(n).unwrap();
        let mean_interval: f64 = (0..(n as u64) * 4).map(|i| poisson.pmf(i) / (i as f64 + n)).sum();
        let oracle = 1.0 / mean_interval / (2.0 * n);
        ensure((ratio / oracle - 1.0).abs() < 1e-9, || format!("N={n}: ratio {ratio}, direct sum {oracle}"))?;
        let dev = (ratio - 1.0).abs();
        ensure(dev < bound, || format!("N={n}: deviation {dev}"))?;
        notes.push(format!("N={n}: {dev:.2e}"));
    }
    Ok(notes.join(", "))
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let status = d2dcache_cli::run(std::iter::once("d2dcache").chain(args.iter().copied()), &mut out, &mut err);
    assert_eq!(status, 0, "{}", String::from_utf8_lossy(&err));
    out
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn determinism() -> Outcome {
    let simulate = [
        "simulate", "--scheme", "msr", "--k", "5", "--N", "1000", "--p", "0.1", "--R", "20", "--events", "500000", "--seed",
        "42", "--compare-analytic",
    ];
    let thresholds = ["thresholds", "--R-grid", "20,60,100", "--N-grid", "1e2,1e3,1e4"];
    for args in [&simulate[..], &thresholds[..]] {
        let runs = [run_cli(args), run_cli(args), in_pool(1, || run_cli(args)), in_pool(4, || run_cli(args))];
        ensure(runs.iter().all(|r| *r == runs[0] && !r.is_empty()), || format!("{} output varies", args[0]))?;
    }
    Ok("simulate and thresholds byte-identical over repeats and 1 or 4 threads".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("code points", code_points),
        ("caching below base station", caching_dominance),
        ("departure-rate scale invariance", scale_invariance),
        ("per-k argmin", per_k_argmin),
        ("regime ordering", regime_ordering),
        ("threshold fits", threshold_fits),
        ("simulator agreement", simulator_agreement),
        ("stationary occupancy", stationarity),
        ("normalizer ratio", normalizer),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
