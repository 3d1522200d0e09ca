use std::process::Command;

use serde_json::Value;

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bicomp-selfish"))
        .args(args)
        .output()
        .expect("spawn cli");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn json(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.extend(["--format", "json"]);
    let (code, out, err) = cli(&full);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).expect("single JSON object")
}

#[test]
fn analyze_json_envelope() {
    let v = json(&["analyze", "--alpha", "0.3", "--lambda", "1"]);
    assert_eq!(v["command"], "analyze");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["inputs"]["gamma"], 0.5);
    let ratio = v["results"]["ratio"].as_f64().unwrap();
    assert!((ratio - 0.7329191907938).abs() < 1e-12);
    assert_eq!(v["results"]["profitable"], true);
}

#[test]
fn echoed_inputs_reproduce_results() {
    let first = json(&[
        "analyze",
        "--alpha",
        "0.17",
        "--tenure",
        "90",
        "--difficulty",
        "4e7",
        "--hashrate",
        "1e6",
        "--gamma",
        "0.2",
    ]);
    let inputs = &first["inputs"];
    let alpha = inputs["alpha"].to_string();
    let lambda = inputs["lambda"].to_string();
    let gamma = inputs["gamma"].to_string();
    let again = json(&[
        "analyze", "--alpha", &alpha, "--lambda", &lambda, "--gamma", &gamma,
    ]);
    assert_eq!(first["results"], again["results"]);
}

#[test]
fn csv_has_header_row() {
    let (code, out, _) = cli(&[
        "threshold",
        "--lambda",
        "2",
        "--gamma",
        "0",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,gamma,tol,alpha_star,bracket_low,bracket_high,evaluations"
    );
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    let alpha_star: f64 = fields[3].parse().unwrap();
    assert!((alpha_star - 0.175).abs() <= 0.01);
}

#[test]
fn sweep_csv_rows_are_tenure_major() {
    let (code, out, _) = cli(&[
        "sweep",
        "--tenures",
        "60,120",
        "--difficulties",
        "3e7,6e7",
        "--hashrate",
        "1e6",
        "--gamma",
        "0",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "tenure,difficulty,lambda,alpha_star");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("60,30000000,2,"));
    assert!(lines[2].starts_with("60,60000000,1,"));
    assert!(lines[3].starts_with("120,30000000,4,"));
    // lambda = 2 in rows 1 and 4
    let a1 = lines[1].rsplit(',').next().unwrap();
    let a4 = lines[4].rsplit(',').next().unwrap();
    assert_eq!(a1, a4);
}

#[test]
fn sweep_rejects_unsorted_axis() {
    let (code, _, err) = cli(&[
        "sweep",
        "--tenures",
        "120,60",
        "--difficulties",
        "6e7",
        "--hashrate",
        "1e6",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("increasing"));
}

#[test]
fn simulate_output_file() {
    let dir = std::env::temp_dir().join(format!("bicomp-selfish-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sim.json");
    let (code, out, _) = cli(&[
        "simulate",
        "--alpha",
        "0.2",
        "--lambda",
        "1",
        "--rounds",
        "20000",
        "--seed",
        "4",
        "--accounting",
        "full",
        "--variant",
        "reset",
        "--format",
        "json",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["inputs"]["accounting"], "full");
    assert_eq!(v["inputs"]["variant"], "reset");
    assert_eq!(v["results"]["rounds_run"], 20000);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_rejects_paper_reset() {
    let (code, _, err) = cli(&[
        "simulate",
        "--alpha",
        "0.2",
        "--lambda",
        "1",
        "--rounds",
        "10",
        "--seed",
        "1",
        "--variant",
        "reset",
    ]);
    assert_eq!(code, 2);
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn simulate_is_repeatable_from_the_cli() {
    let args = [
        "simulate", "--alpha", "0.3", "--lambda", "1", "--rounds", "100000", "--seed", "9",
        "--format", "csv",
    ];
    assert_eq!(cli(&args).1, cli(&args).1);
}

#[test]
fn fix_reports_lower_ratio() {
    let v = json(&[
        "fix",
        "--alpha",
        "0.3",
        "--lambda",
        "1",
        "--multiplier",
        "3",
        "--rounds",
        "200000",
        "--seed",
        "2",
    ]);
    let stages = v["results"]["stages"].as_array().unwrap();
    let before = stages[0]["ratio"].as_f64().unwrap();
    let after = stages[1]["ratio"].as_f64().unwrap();
    assert!(after < before);
    assert_eq!(stages[1]["lambda"], 3.0);
    assert_eq!(stages[1]["gamma"], 0.0);
    assert!(stages[1]["sim_ratio"].as_f64().is_some());
}

#[test]
fn fix_rejects_small_multiplier() {
    let (code, _, _) = cli(&[
        "fix",
        "--alpha",
        "0.3",
        "--lambda",
        "1",
        "--multiplier",
        "0.5",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn verify_small_run_passes() {
    let (code, out, _) = cli(&["verify", "--cases", "50", "--seed", "3", "--format", "csv"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn human_tables_are_default() {
    let (code, out, _) = cli(&["threshold", "--lambda", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("alpha*"));
}
