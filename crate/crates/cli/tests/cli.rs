use d2dcache::codes::{mbr_point, CodeParams};
use d2dcache::cost_model::{cost_regenerating, SystemParams};
use d2dcache::planner::{threshold, DesignSpace, SchemeKind};
use d2dcache_cli::output::format_number;
use d2dcache_cli::{run, EXIT_INVALID, EXIT_NO_CROSSING, EXIT_UNDER_SAMPLED};

struct Outcome {
    status: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let status = run(std::iter::once("d2dcache").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        status,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Rows of a CSV as maps from column name to text.
fn records(csv: &str) -> Vec<Vec<(String, String)>> {
    let mut lines = csv.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn field<'a>(row: &'a [(String, String)], name: &str) -> &'a str {
    &row.iter().find(|(k, _)| k == name).unwrap_or_else(|| panic!("no column {name}")).1
}

#[test]
fn costs_pass_through_regenerating_total() {
    let o = cli(&["costs", "--N", "1000", "--p", "0.005", "--R", "20", "--scheme", "mbr", "--n", "30", "--k", "7", "--d", "10"]);
    assert_eq!(o.status, 0, "{}", o.stderr);
    let p = SystemParams::with_popularity(1000.0, 1.0, 0.005, 20.0).unwrap();
    let code = CodeParams::new(30, 7, 10).unwrap();
    let want = cost_regenerating(&p, &code, &mbr_point(1.0, &code).unwrap()).unwrap().total;
    let rows = records(&o.stdout);
    assert_eq!(rows.len(), 1);
    assert_eq!(field(&rows[0], "total"), format_number(want));
}

#[test]
fn costs_simple_caching_hand_value() {
    let o = cli(&["costs", "--N", "2", "--omega", "1", "--lambda", "1", "--R", "2", "--scheme", "simple-caching"]);
    assert_eq!(o.status, 0);
    assert_eq!(field(&records(&o.stdout)[0], "total"), "2");
}

#[test]
fn invalid_cost_ratio_names_the_rule() {
    let o = cli(&["costs", "--N", "2", "--omega", "1", "--R", "0.5", "--scheme", "simple-caching"]);
    assert_eq!(o.status, EXIT_INVALID);
    assert!(o.stderr.contains("R must exceed 1"), "{}", o.stderr);
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_are_invalid_params() {
    for args in [
        vec!["costs", "--bogus"],
        vec!["costs", "--N", "x"],
        vec!["thresholds", "--R-grid", "20,,60", "--N-grid", "100"],
        vec!["costs", "--N", "100", "--R", "20", "--scheme", "mbr"],
        vec!["costs", "--N", "100", "--R", "20", "--p", "1", "--omega", "1", "--scheme", "simple-caching"],
        vec!["costs", "--N", "100", "--R", "20", "--p", "1", "--scheme", "mbr", "--k", "1"],
        vec!["sweep", "--N", "100", "--R", "20"],
        vec!["simulate", "--N", "100", "--R", "20", "--p", "1", "--scheme", "base-station", "--events", "100", "--horizon", "3"],
    ] {
        assert_eq!(cli(&args).status, EXIT_INVALID, "{args:?}");
    }
}

#[test]
fn help_exits_cleanly() {
    let o = cli(&["--help"]);
    assert_eq!(o.status, 0);
    assert!(o.stdout.contains("thresholds"));
}

#[test]
fn all_schemes_side_by_side() {
    let o = cli(&["costs", "--N", "1000", "--p", "0.005", "--R", "20", "--all"]);
    assert_eq!(o.status, 0, "{}", o.stderr);
    let rows = records(&o.stdout);
    let names: Vec<&str> = rows.iter().map(|r| field(r, "scheme")).collect();
    assert_eq!(names, ["simple-caching", "base-station", "mbr", "msr", "replication"]);
    assert_eq!(field(&rows[2], "k"), "7");
    assert_eq!(field(&rows[1], "total"), "100");
}

#[test]
fn simulate_under_sampled() {
    let o = cli(&["simulate", "--scheme", "mbr", "--k", "7", "--N", "1000", "--p", "0.005", "--R", "20", "--events", "5"]);
    assert_eq!(o.status, EXIT_UNDER_SAMPLED);
    assert!(o.stderr.contains("batches"), "{}", o.stderr);
}

#[test]
fn simulate_zero_events_is_an_empty_report() {
    let o = cli(&["simulate", "--scheme", "mbr", "--k", "7", "--N", "1000", "--p", "0.005", "--R", "20", "--events", "0"]);
    assert_eq!(o.status, 0);
    let row = &records(&o.stdout)[0];
    assert_eq!(field(row, "events"), "0");
    assert_eq!(field(row, "mean_cost_rate"), "");
}

#[test]
fn simulate_compare_reports_small_error() {
    let o = cli(&[
        "simulate", "--scheme", "mbr", "--k", "7", "--d", "10", "--n", "30", "--N", "1000", "--p", "0.005", "--R", "20",
        "--events", "1000000", "--compare-analytic",
    ]);
    assert_eq!(o.status, 0, "{}", o.stderr);
    let err: f64 = field(&records(&o.stdout)[0], "relative_error").parse().unwrap();
    assert!(err <= 0.05, "{err}");
}

#[test]
fn fixed_seed_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<String> = (0..2).map(|i| dir.path().join(format!("run{i}.json")).display().to_string()).collect();
    for path in &paths {
        let o = cli(&[
            "simulate", "--scheme", "msr", "--k", "5", "--N", "1000", "--p", "0.1", "--R", "20", "--events", "200000",
            "--seed", "99", "--coupling", "strict", "--compare-analytic", "--format", "json", "--out", path,
        ]);
        assert_eq!(o.status, 0, "{}", o.stderr);
        assert!(o.stdout.is_empty());
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
}

#[test]
fn thresholds_single_cell_matches_direct_calls() {
    let o = cli(&["thresholds", "--R-grid", "60", "--N-grid", "1000"]);
    assert_eq!(o.status, 0);
    let row = &records(&o.stdout)[0];
    let space = DesignSpace::default();
    for (col, a, b) in [
        ("p1", SchemeKind::SimpleCaching, SchemeKind::Mbr),
        ("p2", SchemeKind::Mbr, SchemeKind::Msr),
        ("p3", SchemeKind::Msr, SchemeKind::Replication),
    ] {
        let c = threshold(a, b, 60.0, 1000.0, &space).unwrap();
        assert_eq!(field(row, col), format_number(c.p().unwrap()));
        assert_eq!(field(row, &format!("{col}_crossings")), c.crossings().to_string());
    }
    assert_eq!(field(row, "error"), "");
}

#[test]
fn thresholds_keep_bad_cells_in_row() {
    let o = cli(&["thresholds", "--R-grid", "0.5,20", "--N-grid", "1000"]);
    assert_eq!(o.status, 0);
    let rows = records(&o.stdout);
    assert!(field(&rows[0], "error").contains("R must exceed 1"));
    assert_eq!(field(&rows[0], "p1"), "");
    assert_eq!(field(&rows[1], "error"), "");
    assert_eq!(cli(&["thresholds", "--R-grid", "0.5", "--N-grid", "1000"]).status, EXIT_INVALID);
}

#[test]
fn thresholds_without_any_crossing_flag_the_surface() {
    // With a three-node code every switch lies outside the scanned popularities.
    let o = cli(&["thresholds", "--R-grid", "1.0001", "--N-grid", "1e7", "--n", "3", "--d", "2"]);
    assert_eq!(o.status, EXIT_NO_CROSSING, "{}{}", o.stdout, o.stderr);
    assert_eq!(records(&o.stdout).len(), 1);
}

#[test]
fn one_point_sweep_matches_costs() {
    let sweep = cli(&["sweep", "--R", "20", "--N", "1000", "--p", "0.005"]);
    assert_eq!(sweep.status, 0);
    let row = &records(&sweep.stdout)[0];
    let all = records(&cli(&["costs", "--N", "1000", "--p", "0.005", "--R", "20", "--all"]).stdout);
    assert_eq!(field(row, "cost_sc"), field(&all[0], "total"));
    assert_eq!(field(row, "cost_mbr_best"), field(&all[2], "total"));
    assert_eq!(field(row, "k_mbr"), field(&all[2], "k"));
    assert_eq!(field(row, "cost_msr_best"), field(&all[3], "total"));
    assert_eq!(field(row, "cost_rep"), field(&all[4], "total"));
    assert_eq!(field(row, "best_scheme"), "mbr");
}

#[test]
fn by_k_minimum_is_mbr_seven() {
    let o = cli(&["sweep", "--by-k", "--R", "20", "--N", "1000", "--p", "0.005"]);
    let rows = records(&o.stdout);
    let best = rows
        .iter()
        .min_by(|a, b| field(a, "cost").parse::<f64>().unwrap().total_cmp(&field(b, "cost").parse().unwrap()))
        .unwrap();
    assert_eq!((field(best, "scheme"), field(best, "k")), ("mbr", "7"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    std::fs::write(&path, "# base\nN = 2\nomega = 1\nR = 3\nscheme = simple-caching\n").unwrap();
    let path = path.display().to_string();
    let from_file = cli(&["costs", "--config", &path]);
    assert_eq!(from_file.status, 0, "{}", from_file.stderr);
    // ((N-1)ω + Rλ)/(1 + λ/(Nω)) = (1 + 3)/1.5
    assert_eq!(field(&records(&from_file.stdout)[0], "total"), format_number(4.0 / 1.5));
    let overridden = cli(&["costs", "--config", &path, "--R", "2"]);
    assert_eq!(field(&records(&overridden.stdout)[0], "total"), "2");
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    std::fs::write(&path, "N = 2\ncolour = blue\n").unwrap();
    let o = cli(&["costs", "--config", &path.display().to_string()]);
    assert_eq!(o.status, EXIT_INVALID);
    assert!(o.stderr.contains("unknown key"), "{}", o.stderr);
}
