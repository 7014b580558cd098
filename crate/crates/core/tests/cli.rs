use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use procunc::cli::{BoundReport, LatticeReport};
use procunc::harness::CampaignReport;
use procunc::io::{from_json, to_json};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn procunc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_procunc")).args(args).env_remove("PROCUNC_SEED").output().unwrap()
}

fn procunc_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_procunc"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    for name in ["identity_qubit.json", "mub_qubit_state.json", "campaign_qubit.json"] {
        assert_eq!(code(&procunc(&["validate", path_str(&example(name))])), 0, "{name}");
    }
    assert_eq!(code(&procunc_stdin(&["validate", "-"], "{\"version\": ")), 2);
    assert_eq!(code(&procunc_stdin(&["validate", "-"], r#"{"version": "7"}"#)), 2);
    let dangling = r#"{"version": "1", "testers": {"T": {"state": "missing", "povm": "also-missing"}}}"#;
    assert_eq!(code(&procunc_stdin(&["validate", "-"], dangling)), 2);
    assert_eq!(code(&procunc(&["validate", "/nonexistent/file.json"])), 2);
}

#[test]
fn validate_names_non_psd_choi() {
    // Choi of X ↦ Xᵀ (the swap), which is trace preserving but not CP.
    let m = |re: f64| [re, 0.0];
    let swap = vec![
        vec![m(1.0), m(0.0), m(0.0), m(0.0)],
        vec![m(0.0), m(0.0), m(1.0), m(0.0)],
        vec![m(0.0), m(1.0), m(0.0), m(0.0)],
        vec![m(0.0), m(0.0), m(0.0), m(1.0)],
    ];
    let doc = serde_json::json!({
        "version": "1",
        "channels": {"transpose": {"d_in": 2, "d_out": 2, "choi": {"dims": [2, 2], "matrix": swap}}}
    });
    let o = procunc_stdin(&["validate", "-"], &doc.to_string());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    assert!(err.contains("transpose") && err.contains("-1"), "{err}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["valid"], false);
    assert!((report["objects"][0]["residuals"]["cp_residual"].as_f64().unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn bounds_on_mub_state_case() {
    let o = procunc(&["bounds", path_str(&example("mub_qubit_state.json"))]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let r: BoundReport = from_json(&text).unwrap();
    assert!((r.overlap_bound - 1.0).abs() < 1e-9);
    assert!((r.bounds.s_cumulative.last().unwrap() - 2.0).abs() < 1e-6);
    assert!((r.bounds.s.iter().sum::<f64>() - 2.0).abs() < 1e-6);
    assert_eq!(r.optimizers.len(), r.m + r.n);
    // load(emit(x)) = x, byte for byte
    assert_eq!(to_json(&r), text);
}

#[test]
fn bounds_respects_log_base_and_cap() {
    let file = example("mub_qubit_state.json");
    let o = procunc(&["bounds", path_str(&file), "--log-base", "2.718281828459045"]);
    let r: BoundReport = from_json(&stdout(&o)).unwrap();
    assert!((r.overlap_bound - std::f64::consts::LN_2).abs() < 1e-9);
    assert_eq!(code(&procunc(&["bounds", path_str(&file), "--enumeration-cap", "3"])), 1);
    assert_eq!(code(&procunc(&["bounds", path_str(&file), "--log-base", "1"])), 2);
    assert_eq!(code(&procunc(&["bounds", path_str(&file), "--testers", "prepare-Z,nope"])), 2);
}

#[test]
fn verify_is_deterministic() {
    let file = example("campaign_qubit.json");
    let args = ["verify", path_str(&file), "--samples", "1", "--seed", "7"];
    let a = procunc(&args);
    let b = procunc(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let threaded = procunc(&["verify", path_str(&file), "--samples", "1", "--seed", "7", "--threads", "1"]);
    assert_eq!(a.stdout, threaded.stdout);

    let from_env = Command::new(env!("CARGO_BIN_EXE_procunc"))
        .args(["verify", path_str(&file), "--samples", "1"])
        .env("PROCUNC_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(a.stdout, from_env.stdout);
    let overridden = Command::new(env!("CARGO_BIN_EXE_procunc"))
        .args(["verify", path_str(&file), "--samples", "1", "--seed", "7"])
        .env("PROCUNC_SEED", "8")
        .output()
        .unwrap();
    assert_eq!(a.stdout, overridden.stdout);
}

#[test]
fn default_campaign_passes_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("slacks.csv");
    let o = procunc(&["verify", path_str(&example("campaign_qubit.json")), "--csv", path_str(&csv)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let r: CampaignReport = from_json(&text).unwrap();
    assert_eq!(r.total_violations, 0);
    assert!(r.conjecture.is_some());
    assert_eq!(to_json(&r), text);
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), r.config.samples + 1);
    assert!(rows.starts_with("sample,"));
}

#[test]
fn corrupted_bounds_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let file = example("mub_qubit_state.json");
    let o = procunc(&["bounds", path_str(&file)]);
    let mut r: BoundReport = from_json(&stdout(&o)).unwrap();
    for v in [&mut r.bounds.s_cumulative, &mut r.bounds.s, &mut r.bounds.s_flat] {
        v.iter_mut().for_each(|x| *x *= 0.5);
    }
    let bad = dir.path().join("bad_bounds.json");
    std::fs::write(&bad, to_json(&r)).unwrap();
    let o = procunc(&["verify", path_str(&file), "--samples", "20", "--bounds", path_str(&bad)]);
    assert_eq!(code(&o), 1);
    let report: CampaignReport = from_json(&stdout(&o)).unwrap();
    assert!(report.total_violations > 0);
    assert!(report.violations.iter().all(|v| v.channel.choi.is_some() || v.channel.kraus.is_some()));

    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&procunc(&["verify", path_str(&file), "--bounds", path_str(&bad)])), 2);
}

#[test]
fn lattice_examples() {
    let o = procunc(&["lattice", "--file", path_str(&example("example1_vectors.json"))]);
    assert_eq!(code(&o), 0);
    let r: LatticeReport = from_json(&stdout(&o)).unwrap();
    for (a, b) in r.lub.iter().zip([0.6, 0.175, 0.175, 0.05]) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in r.b.iter().zip([0.6, 0.15, 0.2, 0.05]) {
        assert!((a - b).abs() < 1e-12);
    }

    let single: LatticeReport = from_json(&stdout(&procunc(&["lattice", "--vector", "0.5,0.3,0.2"]))).unwrap();
    assert_eq!(single.glb, vec![0.5, 0.3, 0.2]);
    assert_eq!(single.lub, single.glb);

    let flat: LatticeReport = from_json(&stdout(&procunc(&["lattice", "--vector", "0,1"]))).unwrap();
    assert_eq!(flat.inputs[0].flatness, vec![0.5, 0.5]);
    assert_eq!(flat.inputs[0].flatness_trace.len(), 1);

    assert_eq!(code(&procunc(&["lattice", "--vector", "0.5,0.5", "--vector", "0.9,0.2"])), 1);
    assert_eq!(code(&procunc(&["lattice"])), 2);
    assert_eq!(code(&procunc(&["lattice", "--vector", "0.5,abc"])), 2);
}

#[test]
fn explore_runs_on_state_case() {
    let o = procunc(&["explore", path_str(&example("mub_qubit_state.json")), "--samples", "100"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["counterexample_candidate"], false);
}

#[test]
fn unknown_flags_are_input_errors() {
    assert_eq!(code(&procunc(&["bounds"])), 2);
    assert_eq!(code(&procunc(&["frobnicate"])), 2);
    assert_eq!(code(&procunc(&["--tol", "speed=1", "lattice", "--vector", "1"])), 2);
    assert_eq!(code(&procunc(&["--help"])), 0);
}
