use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use priorci::cli::SolutionDocument;

fn priorci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_priorci"))
        .args(args)
        .env("PRIORCI_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small factorial problem that solves in a second or two.
fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
  "problem": {"design": {"factorial2x2": {"replicates": 20}}, "a": [0, 2, 0, -2], "c": [0, 0, 0, 1]},
  "solve": {"lambda": 0.5, "d": 3, "knot_step": 1}
}"#,
    )
    .unwrap();
    path
}

#[test]
fn solve_then_curves_interval_and_mc_check() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let solution = dir.path().join("sol.json");

    let out = priorci(&["solve", "--config", p(&config), "--output", p(&solution)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("expected gain"));
    let doc = SolutionDocument::load(&solution).unwrap();
    assert!(doc.report.converged);
    assert!(doc.report.expected_gain > 0.0);
    assert_eq!(doc.provenance.config_sha256.len(), 64);

    let out = priorci(&["curves", "--solution", p(&solution), "--gamma-max", "4", "--step", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gamma,coverage,e_squared"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[1] >= 0.95 - 1e-6));

    // design and data from CSV files: the same 2 x 2 layout written out by hand
    let design = dir.path().join("design.csv");
    let mut text = String::from("one,x1,x2,x12\n");
    for _ in 0..20 {
        text.push_str("1,-1,-1,1\n1,1,-1,-1\n1,-1,1,-1\n1,1,1,1\n");
    }
    fs::write(&design, text).unwrap();
    let csv_config = dir.path().join("csv_config.json");
    fs::write(
        &csv_config,
        r#"{"problem": {"design": {"csv": {"path": "design.csv"}}, "a": [0, 2, 0, -2], "c": [0, 0, 0, 1]}}"#,
    )
    .unwrap();
    let data = dir.path().join("data.csv");
    let ys: Vec<String> = (0..80).map(|i| format!("{}", 10.0 + ((i * 7) % 5) as f64 * 0.3)).collect();
    fs::write(&data, format!("y\n{}\n", ys.join("\n"))).unwrap();
    let out =
        priorci(&["interval", "--config", p(&csv_config), "--solution", p(&solution), "--data", p(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["standard", "new"] {
        let (lo, hi) = (report[key]["lower"].as_f64().unwrap(), report[key]["upper"].as_f64().unwrap());
        assert!(lo < hi);
    }

    let out = priorci(&["mc-check", "--solution", p(&solution), "--gammas", "0,2", "--samples", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(priorci(&["solve", "--config", p(&config), "--output", p(&a)]).status.code(), Some(0));
    assert_eq!(priorci(&["solve", "--config", p(&config), "--output", p(&b)]).status.code(), Some(0));
    let (a, b) = (SolutionDocument::load(&a).unwrap(), SolutionDocument::load(&b).unwrap());
    assert!((a.report.objective_value - b.report.objective_value).abs() < 1e-8);
    assert_eq!(a.report.bs.b_values(), b.report.bs.b_values());
}

#[test]
fn sweep_writes_one_solution_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = priorci(&[
        "sweep",
        "--config",
        p(&config),
        "--vary",
        "lambda",
        "--values",
        "0.5,1",
        "--output-dir",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("value,lambda,d,knot_step,expected_gain"));
    assert!(out_dir.join("solution_0.json").exists());
    assert!(out_dir.join("solution_1.json").exists());
}

#[test]
fn naive_summary_reports_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("naive.csv");
    let out = priorci(&[
        "naive",
        "--rho",
        "-0.7071067811865476",
        "--dof",
        "76",
        "--gamma-max",
        "5",
        "--output",
        p(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let min = summary["refined_min_coverage"].as_f64().unwrap();
    assert!((min - 0.7306).abs() < 1e-3, "{min}");
    assert!(fs::read_to_string(&csv).unwrap().starts_with("gamma,coverage,e_squared\n"));
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"problem": {"design": {"factorial2x2": {"replicates": 2}}, "a": [0,1,0,0], "c": [0,0,0,1], "colour": 1}}"#)
        .unwrap();
    let out = priorci(&["solve", "--config", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "json");

    let missing = dir.path().join("missing.json");
    let out = priorci(&["curves", "--solution", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));

    let out = priorci(&["naive", "--rho", "1", "--dof", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "degenerate_correlation");
}
