use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn perpmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perpmm")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = perpmm(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SPEC: &str = r#"
asset = "TST"
seed = 7
start_ts = 1704067200
days = 6
mid0 = 100.0
price_vol = 0.004
fill_lambda0 = 24.0
fill_k = 20.0

[funding]
kappa = 0.3
theta = 2.0e-5
sigma = 3.0e-5

[funding_jump]
lambda_j = 0.02
mu_j = 0.0
sigma_j = 2.0e-4
"#;

/// Synthetic dataset plus a small config in a fresh directory.
fn fixture(extra_backtest: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    ok(&["synth", "--spec", spec.to_str().unwrap(), "--out", dir.path().join("data").to_str().unwrap()]);
    let cfg = format!(
        r#"
asset = "TST"
output_dir = "out"

[data]
mid = "data/mid.csv"
funding = "data/funding.csv"
tape = "data/tape.csv"

[calibration]
delta_min = 0.001

[hjb]
horizon_hours = 24.0
n_time = 2048
q_max = 5.0
n_f = 21
alpha = 1.0e-3
phi = 1.0e-4

[backtest]
seeds = {{ start = 1, end = 10 }}
calibration_seeds = {{ start = 11, end = 14 }}
stress_window_days = 1.0
{extra_backtest}
"#
    );
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg).unwrap();
    (dir, path)
}

#[test]
fn missing_column_is_an_input_error() {
    let (dir, cfg) = fixture("");
    fs::write(dir.path().join("data/funding.csv"), "timestamp,rate\n2024-01-01T00:00:00Z,1e-5\n").unwrap();
    let o = perpmm(&["calibrate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("funding_rate"), "{}", stderr(&o));
}

#[test]
fn schema_violations_exit_before_compute() {
    let (dir, cfg) = fixture("unknown_knob = 3");
    let o = perpmm(&["backtest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown_knob"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let (_d, overlap) = fixture("");
    let text = fs::read_to_string(&overlap).unwrap().replace("start = 11, end = 14", "start = 5, end = 14");
    fs::write(&overlap, text).unwrap();
    let o = perpmm(&["verify", "-c", overlap.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("disjoint"));
}

#[test]
fn zero_vol_zero_funding_synth() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("flat.toml");
    let flat = SPEC.replace("price_vol = 0.004", "price_vol = 0.0").replace(
        "[funding]\nkappa = 0.3\ntheta = 2.0e-5\nsigma = 3.0e-5\n\n[funding_jump]\nlambda_j = 0.02\nmu_j = 0.0\nsigma_j = 2.0e-4\n",
        "[funding]\nkappa = 0.3\ntheta = 0.0\nsigma = 0.0\n",
    );
    fs::write(&spec, flat).unwrap();
    let out = dir.path().join("d");
    ok(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let mid = fs::read_to_string(out.join("mid.csv")).unwrap();
    let value = |l: &str| l.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!(mid.lines().skip(1).all(|l| value(l) == 100.0));
    let funding = fs::read_to_string(out.join("funding.csv")).unwrap();
    assert!(funding.lines().skip(1).all(|l| value(l) == 0.0));
    let truth = json(&out.join("truth.json"));
    assert_eq!(truth["fill_k"], 20.0);
}

#[test]
fn packaged_eth_calibration() {
    let out = tempfile::tempdir().unwrap();
    let cfg = repo_root().join("configs/eth.toml");
    let (hit, vol) = (out.path().join("hit"), out.path().join("vol"));
    ok(&["calibrate", "-c", cfg.to_str().unwrap(), "--out", hit.to_str().unwrap()]);
    ok(&["calibrate", "-c", cfg.to_str().unwrap(), "--out", vol.to_str().unwrap(), "--mode", "volume_minute"]);
    let f = json(&hit.join("funding.json"));
    assert!(f["half_life_hours"].as_f64().unwrap() > 0.0);
    assert!(f["ll_gain"].as_f64().unwrap() >= 0.0);
    let (h, v) = (json(&hit.join("fill.json")), json(&vol.join("fill.json")));
    assert_eq!(v["mode"], "volume_minute");
    assert!(h["lambda0_per_hour"].as_f64().unwrap() >= v["lambda0_per_hour"].as_f64().unwrap());
}

#[test]
fn solve_refuses_cfl_violations_with_the_bound() {
    let (dir, cfg) = fixture("");
    ok(&["calibrate", "-c", cfg.to_str().unwrap()]);
    let coarse = dir.path().join("coarse.toml");
    fs::write(&coarse, fs::read_to_string(&cfg).unwrap().replace("n_time = 2048", "n_time = 50")).unwrap();
    let o = perpmm(&["solve", "-c", coarse.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("CFL violation") && msg.contains("monotone bound") && msg.contains("n_time to at least"), "{msg}");
}

#[test]
fn full_pipeline_is_deterministic() {
    let (dir, cfg) = fixture("");
    let c = cfg.to_str().unwrap();
    ok(&["calibrate", "-c", c]);
    let solved = ok(&["solve", "-c", c, "--verify-as-limit"]);
    assert!(String::from_utf8_lossy(&solved.stdout).contains("AS-limit check passed"));
    let out = dir.path().join("out");
    let table = fs::read(out.join("hjb_fd.table")).unwrap();
    let report = fs::read(out.join("solve.json")).unwrap();
    ok(&["solve", "-c", c]);
    assert_eq!(fs::read(out.join("hjb_fd.table")).unwrap(), table);
    assert_eq!(fs::read(out.join("solve.json")).unwrap(), report);

    ok(&["backtest", "-c", c, "--stress"]);
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let summary = fs::read(out.join("summary.json")).unwrap();
    let stress = fs::read(out.join("stress.json")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next(), Some("seed,policy,final_equity,inventory_rms,max_drawdown,n_fills,funding_paid"));
    for p in ["pure_as", "pure_as_scaled", "hjb_fd", "risk_calibrated"] {
        assert_eq!(results.lines().filter(|l| l.split(',').nth(1) == Some(p)).count(), 10, "{p}");
    }
    let s: Value = serde_json::from_slice(&summary).unwrap();
    for row in s["rows"].as_array().unwrap() {
        let w = row["win_rate"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&w));
    }
    let windows: Value = serde_json::from_slice(&stress).unwrap();
    let labels: Vec<&str> = windows.as_array().unwrap().iter().map(|w| w["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["high_funding", "low_funding", "high_volatility", "calm"]);

    ok(&["backtest", "-c", c]);
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap(), results);
    assert_eq!(fs::read(out.join("summary.json")).unwrap(), summary);
    ok(&["stress", "-c", c]);
    assert_eq!(fs::read(out.join("stress.json")).unwrap(), stress);
}

#[test]
fn backtest_requires_the_baseline() {
    let (_dir, cfg) = fixture(r#"policies = ["hjb_fd"]"#);
    let c = cfg.to_str().unwrap();
    ok(&["calibrate", "-c", c]);
    ok(&["solve", "-c", c]);
    let o = perpmm(&["backtest", "-c", c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pure_as"));
}

#[test]
fn solve_before_calibrate_is_an_input_error() {
    let (_dir, cfg) = fixture("");
    let o = perpmm(&["solve", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("calibrate"));
}
