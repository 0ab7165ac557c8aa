use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "seed": 3,
    "system": {
        "antennas": 4,
        "subarrays": 4,
        "subarray_shape": [2, 2],
        "users": [
            {"distance_m": 30, "azimuth_deg": 90, "elevation_deg": 40},
            {"distance_m": 50, "azimuth_deg": 90, "elevation_deg": 120}
        ]
    },
    "experiment": {
        "sweep": {"axis": "subarrays", "values": [1, 4]},
        "replicates": 2,
        "schemes": ["fdris", "ris"]
    },
    "solver": {"max_iterations": 20}
}"#;

fn fdris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdris")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_preset() {
    let o = fdris(&["validate", "--preset", "paper-sec5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["system"]["carrier_hz"], 28e9);
    assert_eq!(v["system"]["users"].as_array().unwrap().len(), 4);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"system": {"f_min_hz": 3e7, "f_max_hz": 2e7}}"#);
    let o = fdris(&["validate", "--scenario", &bad]);
    assert_eq!(o.status.code(), Some(2));

    let unknown = write(dir.path(), "unknown.json", r#"{"system": {"carrier": 28e9}}"#);
    let o = fdris(&["validate", "--scenario", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("carrier"));

    let o = fdris(&["validate", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_exit_1() {
    let o = fdris(&["validate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/scenario.json"));
}

#[test]
fn solve_writes_solution_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("out");
    let o = fdris(&["solve", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["scheme"], "proposed-fdris");
    assert!(sol["wsr"].as_f64().unwrap() > 0.0);
    let trace = std::fs::read_to_string(out.join("trace_fdris.csv")).unwrap();
    let rows = trace.lines().count() - 1;
    assert_eq!(rows as u64, sol["iterations"].as_u64().unwrap());
    assert!(trace.starts_with("iteration,wsr,surrogate,rate_1,rate_2,mu"));
}

#[test]
fn baselines_compare_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let o = fdris(&["baselines", "--scenario", &sc, "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for name in ["fdris", "ris", "zf"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{text}");
    }
}

#[test]
fn sweep_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("sweep");
    let o = fdris(&[
        "sweep", "--scenario", &sc, "--out", out.to_str().unwrap(), "--replicates", "1", "--scheme", "fdris",
        "--scheme", "zf", "--workers", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2);
    assert!(out.join("summary.json").exists());
    assert!(out.join("traces").join("fdris_p1.csv").exists());
}

#[test]
fn pattern_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.json", SMALL);
    let out = dir.path().join("pat");
    let o = fdris(&[
        "pattern", "--scenario", &sc, "--out", out.to_str().unwrap(), "--distances", "20,60,9", "--elevations",
        "0,180,7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("pattern_fdris.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 9 * 7);

    let o = fdris(&["pattern", "--scenario", &sc, "--distances", "20,60"]);
    assert_eq!(o.status.code(), Some(2));
}
