use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rmg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rmg"));
    c.env_remove("RMG_THREADS");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    rmg().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "rmg {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Target and six-parameter model for a 20-asset market.
fn write_model(dir: &Path) -> (PathBuf, PathBuf) {
    let n = 20;
    let raw: Vec<f64> = (0..n).map(|i| 0.7 + 0.6 * (i as f64 / (n - 1) as f64)).collect();
    let s = (n as f64 / raw.iter().map(|b| b * b).sum::<f64>()).sqrt();
    let beta: Vec<f64> = raw.iter().map(|b| b * s).collect();
    let t = dir.join("target.json");
    std::fs::write(&t, json!({"v_bar_0": 0.3, "v_bar_1": 0.7, "beta_bar": beta}).to_string()).unwrap();
    let p = dir.join("params.json");
    let params = json!({
        "alpha": {"00": 0.05, "11": 0.25, "10": 0.017},
        "gamma": {"00": 0.04, "11": 0.008, "10": 0.003},
        "noise": {"family": "student_t", "nu": 5.0},
        "tier": "six"
    });
    std::fs::write(&p, params.to_string()).unwrap();
    (t, p)
}

fn simulated_panel(dir: &Path) -> PathBuf {
    write_model(dir);
    ok(
        &[
            "simulate", "--target", "target.json", "--params", "params.json", "-T", "600", "--seed", "7", "--out",
            "sim.csv", "--states", "states.json",
        ],
        dir,
    );
    dir.join("sim.csv")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["target", "--out", "t.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn help_lists_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["fit", "--help"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--tier", "--noise", "--nu", "--mode", "--seed", "--panel", "--target", "--out", "--states"] {
        assert!(text.contains(flag), "missing {flag} in help");
    }
}

#[test]
fn bad_csv_exits_one_with_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "date,A,B\n2020-01-01,0.1,oops\n2020-01-02,0.2,0.3\n").unwrap();
    let out = run(&["target", "--panel", "bad.csv", "--out", "t.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!dir.path().join("t.json").exists());
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmg()
        .args(["analyze", "cliffs", "--x", "a.csv", "--y", "b.csv"])
        .env("RMG_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_model(d);
    let args = |out: &'static str| {
        [
            "simulate", "--target", "target.json", "--params", "params.json", "-T", "300", "--seed", "11", "--out", out,
        ]
    };
    let first = ok(&args("a.csv"), d);
    ok(&args("b.csv"), d);
    let a = std::fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 301);
    assert!(text.starts_with("date,A0000,"));

    let cfg: Value = serde_json::from_str(String::from_utf8_lossy(&first.stderr).lines().next().unwrap()).unwrap();
    assert_eq!(cfg["command"], "simulate");
    assert_eq!(cfg["seed"], 11);
    assert_eq!(cfg["burn_in"], 500);
}

#[test]
fn target_defaults_to_first_thousand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_model(d);
    ok(
        &["simulate", "--target", "target.json", "--params", "params.json", "-T", "1500", "--out", "sim.csv"],
        d,
    );
    let out = ok(&["target", "--panel", "sim.csv", "--out", "t.json"], d);
    assert!(String::from_utf8_lossy(&out.stdout).contains("rows 0..1000"));
    let t = read_json(&d.join("t.json"));
    let beta = t["beta_bar"].as_array().unwrap();
    assert_eq!(beta.len(), 20);
    let norm: f64 = beta.iter().map(|b| b.as_f64().unwrap().powi(2)).sum();
    assert!((norm - 20.0).abs() < 1e-9);
    assert_eq!(t["window"]["from"], "2000-01-01");

    ok(
        &["target", "--panel", "sim.csv", "--window-from", "2000-02-01", "--out", "w.json"],
        d,
    );
    assert_eq!(read_json(&d.join("w.json"))["window"]["from"], "2000-02-01");
}

#[test]
fn fit_nests_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated_panel(d);
    let fit = |tier: &str, out: &str| {
        let o = ok(
            &[
                "fit", "--panel", "sim.csv", "--target", "target.json", "--tier", tier, "--noise", "t", "--nu", "5",
                "--fix-nu", "--no-se", "--out", out,
            ],
            d,
        );
        String::from_utf8(o.stdout).unwrap()
    };
    let row2 = fit("2", "f2.json");
    let row6 = fit("6", "f6.json");
    fit("6", "f6b.json");
    assert!(row2.lines().nth(1).unwrap().trim_start().starts_with('2'));
    assert!(row6.lines().nth(1).unwrap().trim_start().starts_with('6'));
    let l2 = read_json(&d.join("f2.json"))["loglik"].as_f64().unwrap();
    let l6 = read_json(&d.join("f6.json"))["loglik"].as_f64().unwrap();
    assert!(l6 >= l2, "L6 {l6} < L2 {l2}");
    assert_eq!(
        std::fs::read(d.join("f6.json")).unwrap(),
        std::fs::read(d.join("f6b.json")).unwrap()
    );
}

#[test]
fn fit_writes_states_usable_by_analytics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated_panel(d);
    ok(
        &[
            "fit", "--panel", "sim.csv", "--target", "target.json", "--tier", "2", "--noise", "gauss", "--out",
            "f.json", "--states", "fs.json",
        ],
        d,
    );
    let report = read_json(&d.join("f.json"));
    assert_eq!(report["params"]["noise"]["family"], "gaussian");
    assert_eq!(report["std_errors"].as_array().map(|a| a.len()), Some(2));
    let states = read_json(&d.join("fs.json"));
    assert_eq!(states.as_array().unwrap().len(), 600);

    ok(&["degarch", "--panel", "sim.csv", "--states", "fs.json", "--out", "eta.csv"], d);
    let eta = std::fs::read_to_string(d.join("eta.csv")).unwrap();
    assert_eq!(eta.lines().count(), 601);
}

#[test]
fn analyze_risk_and_friends_write_long_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated_panel(d);
    let mut sectors = String::from("ticker,sector\n");
    for i in 0..20 {
        sectors.push_str(&format!("A{i:04},{}\n", if i < 10 { "tech" } else { "fin" }));
    }
    std::fs::write(d.join("sectors.csv"), sectors).unwrap();

    ok(
        &["analyze", "risk", "--states", "states.json", "--sectors", "sectors.csv", "--out", "risk.csv"],
        d,
    );
    let risk = std::fs::read_to_string(d.join("risk.csv")).unwrap();
    let mut lines = risk.lines();
    assert_eq!(lines.next(), Some("t,sector,risk,risk_smoothed"));
    assert_eq!(lines.count(), 600 * 2);

    ok(
        &[
            "analyze", "sector-corr", "--states", "states.json", "--sectors", "sectors.csv", "--panel", "sim.csv",
            "--out", "sc.csv",
        ],
        d,
    );
    // 12 windows of 50 days, 3 sector pairs
    assert_eq!(std::fs::read_to_string(d.join("sc.csv")).unwrap().lines().count(), 1 + 12 * 3);

    ok(
        &["analyze", "corr", "--states", "states.json", "--pair", "0,19", "--out", "c.csv"],
        d,
    );
    assert_eq!(std::fs::read_to_string(d.join("c.csv")).unwrap().lines().count(), 1 + 600 * 2);

    let lev = ok(
        &[
            "analyze", "leverage", "--panel", "sim.csv", "--states", "states.json", "--t-max", "10", "--out",
            "lev.csv", "--asymmetry-out", "a.csv",
        ],
        d,
    );
    assert!(String::from_utf8_lossy(&lev.stdout).contains("mean asymmetry"));
    assert_eq!(std::fs::read_to_string(d.join("lev.csv")).unwrap().lines().count(), 1 + 20 * 21);

    ok(&["analyze", "acf", "--panel", "sim.csv", "--max-lag", "20", "--out", "acf.csv"], d);
    let acf = std::fs::read_to_string(d.join("acf.csv")).unwrap();
    assert!(acf.lines().nth(1).unwrap().starts_with("0,1"));

    ok(&["analyze", "betas", "--states", "states.json", "--out", "b.csv"], d);
    assert_eq!(std::fs::read_to_string(d.join("b.csv")).unwrap().lines().count(), 1 + 600 * 20);
}

#[test]
fn analyze_sample_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated_panel(d);
    let pred_args = [
        "analyze", "predicted", "--panel", "sim.csv", "--states", "states.json", "--noise", "t", "--nu", "5",
        "--replications", "3", "--seed", "4", "--out", "pred.csv", "--empirical-out", "emp.csv",
    ];
    ok(&pred_args, d);
    let first = std::fs::read(d.join("pred.csv")).unwrap();
    ok(&pred_args, d);
    assert_eq!(first, std::fs::read(d.join("pred.csv")).unwrap());
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 1 + 600 * 3 * 20);

    let chi = ok(
        &["analyze", "chi2", "--empirical", "emp.csv", "--predicted", "pred.csv", "--bins", "40"],
        d,
    );
    let c: Value = serde_json::from_slice(&chi.stdout).unwrap();
    assert!(c["chi2_per_dof"].as_f64().unwrap() > 0.0);

    let cl = ok(&["analyze", "cliffs", "--x", "emp.csv", "--y", "emp.csv"], d);
    assert_eq!(String::from_utf8_lossy(&cl.stdout).trim(), "0");

    let tail = ok(&["analyze", "tail", "--sample", "pred.csv"], d);
    let t: Value = serde_json::from_slice(&tail.stdout).unwrap();
    assert!(t["nu"].as_f64().unwrap() > 2.0);

    let delta = ok(
        &["analyze", "delta", "--panel", "sim.csv", "--simulated", "sim.csv", "--pairs", "10", "--out", "d.csv"],
        d,
    );
    assert!(String::from_utf8_lossy(&delta.stdout).contains("pairs 10"));
}

#[test]
fn uvg_per_asset_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated_panel(d);
    ok(&["uvg", "--panel", "sim.csv", "--noise", "gauss", "--out", "u.csv"], d);
    let text = std::fs::read_to_string(d.join("u.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ticker,alpha,gamma,h_bar,loglik"));
    assert_eq!(lines.count(), 20);
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated_panel(d);
    let before = std::fs::read(d.join("sim.csv")).unwrap();
    ok(&["target", "--panel", "sim.csv", "--normalize", "--out", "t.json"], d);
    ok(&["degarch", "--panel", "sim.csv", "--states", "states.json", "--out", "e.csv"], d);
    assert_eq!(before, std::fs::read(d.join("sim.csv")).unwrap());
}
