//! End-to-end checks of the command-line surface.

use std::process::Command;

fn herdsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_herdsim"))
}

fn run_ok(args: &[&str]) -> String {
    let out = herdsim().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}; stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8")
}

#[test]
fn pf_reports_the_nine_dimensional_type_space() {
    let stdout = run_ok(&["pf", "--d", "3", "--h", "1", "--lambda", "1.0", "--v", "1.0"]);
    let json: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let result = &json["result"];
    assert_eq!(result["dim"], 9);
    for key in ["d", "h", "lambda", "v", "mu", "f_min", "f_max", "dim", "residual"] {
        assert!(!result[key].is_null(), "missing key {key}");
    }
    assert!(result["residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn lambda_bar_is_bracket_certified() {
    let stdout = run_ok(&[
        "lambda-bar",
        "--d",
        "3",
        "--h",
        "1",
        "--v",
        "1.0",
        "--tol",
        "1e-3",
    ]);
    let json: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let result = &json["result"];
    let hat = result["lambda_hat"].as_f64().unwrap();
    assert!(hat >= 1.0 / 3.0);
    assert!(result["mu_lo"].as_f64().unwrap() < 0.0);
    assert!(result["mu_hi"].as_f64().unwrap() > 0.0);
    assert!(result["hi"].as_f64().unwrap() - result["lo"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "simulate-herds",
        "--d",
        "3",
        "--lambda",
        "0.8",
        "--v",
        "1.0",
        "--horizon",
        "5",
        "--reps",
        "300",
        "--event-cap",
        "20000",
        "--seed",
        "42",
    ];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(a, b);
    assert!(a.contains("config_hash"));
}

#[test]
fn unknown_config_keys_exit_with_code_two() {
    let dir = std::env::temp_dir().join("herdsim-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"lambda": 1.0, "bogus": 3}"#).unwrap();
    let out = herdsim()
        .args(["pf", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_ranges_exit_with_code_two() {
    let out = herdsim()
        .args(["simulate-herds", "--d", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_writes_the_documented_csv() {
    let dir = std::env::temp_dir().join("herdsim-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("scan.csv");
    run_ok(&[
        "extinction-scan",
        "--n-grid",
        "50,100",
        "--lambda",
        "0.2",
        "--v",
        "0.0",
        "--reps",
        "20",
        "--horizon",
        "200",
        "--event-cap",
        "1000000",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,lambda,v,reps,q1,median,q3,censored_fraction,mean_events"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn cp_csv_has_the_pinned_schema() {
    let dir = std::env::temp_dir().join("herdsim-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("runs.csv");
    run_ok(&[
        "simulate-cp",
        "--n",
        "60",
        "--lambda",
        "0.3",
        "--v",
        "1.0",
        "--reps",
        "10",
        "--horizon",
        "50",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,seed,n,d,lambda,v,outcome,tau,events,wall_ms"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 10);
        assert!(cols[6] == "died" || cols[6] == "censored");
    }
}
