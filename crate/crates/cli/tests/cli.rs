use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn lab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rendezvous-lab"));
    c.env_remove("RENDEZVOUS_LAB_JOBS");
    c
}

fn run_in(args: &[&str]) -> Output {
    lab().args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn list_is_stable_and_covers_every_criterion() {
    let a = run_in(&["list"]);
    let b = run_in(&["list"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("AC-1 delta t^{-1/2}"));
    assert!(text.contains("AC-4 symmetric O(1/t) bound"));
    for i in 1..=10 {
        assert!(text.contains(&format!("AC-{i} ")), "missing AC-{i}");
    }
}

#[test]
fn delta_rate_scenario_writes_fit_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rate");
    let o = run_in(&["run", "delta-onesided-rate", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("rate.csv").exists());
    let fit = read_json(&out.join("fit.json"));
    let slope = fit["fit"]["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 0.03, "{slope}");

    let manifest = read_json(&out.join("manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    let files: Vec<&str> = outputs
        .iter()
        .map(|o| o["file"].as_str().unwrap())
        .collect();
    assert!(files.contains(&"rate.csv") && files.contains(&"fit.json"));
    for entry in outputs {
        let bytes = fs::read(out.join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(
            entry["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    assert_eq!(manifest["scenario"], "delta-onesided-rate");
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(manifest["version"].is_string() && manifest["core_version"].is_string());
}

#[test]
fn blocks_scenario_reports_not_good() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(&[
        "run",
        "blocks-cesaro",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report = read_json(&tmp.path().join("report.json"));
    assert_eq!(report["verdict"], "NotGood");
}

#[test]
fn outputs_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["symmetric-range-rate", "blocks-cesaro", "kernel-audit"] {
        let mut hashes = Vec::new();
        for jobs in ["1", "4"] {
            let out = tmp.path().join(format!("{name}-{jobs}"));
            let o = run_in(&["run", name, "--jobs", jobs, "--out", out.to_str().unwrap()]);
            assert!(o.status.success());
            let m = read_json(&out.join("manifest.json"));
            hashes.push(m["outputs"].clone());
        }
        assert_eq!(hashes[0], hashes[1], "{name}");
    }
}

#[test]
fn jobs_fall_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab()
        .args(["run", "delta-cesaro", "--out", tmp.path().to_str().unwrap()])
        .env("RENDEZVOUS_LAB_JOBS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read_json(&tmp.path().join("manifest.json"))["jobs"], 3);
}

#[test]
fn eps_tail_flag_overrides_and_is_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let o = run_in(&[
        "run",
        "kernel-audit",
        "--eps-tail",
        "1e-10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(read_json(&out.join("manifest.json"))["eps_tail"], 1e-10);
    let audits = read_json(&out.join("kernels.json"));
    assert!(audits
        .as_array()
        .unwrap()
        .iter()
        .all(|a| a["tail_bound"].as_f64().unwrap() <= 1e-10));

    let o = run_in(&[
        "run",
        "kernel-audit",
        "--eps-tail",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_increasing_ns_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write_scenario(
        tmp.path(),
        "bad.json",
        r#"{"schema": 1, "name": "bad", "constellation": {"generator": "delta"},
            "experiment": {"type": "cesaro", "kind": "one_sided", "ns": [8, 4]}}"#,
    );
    for cmd in ["validate", "run"] {
        let o = run_in(&[cmd, &f]);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8(o.stderr).unwrap();
        assert!(err.contains("experiment.ns"), "{err}");
    }
}

#[test]
fn unknown_keys_and_generators_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_scenario(
        tmp.path(),
        "typo.json",
        r#"{"schema": 1, "name": "t", "constellation": {"generator": "delta"},
            "experiment": {"type": "cesaro", "kind": "one_sided", "ns": [1, 2], "extra": true}}"#,
    );
    let o = run_in(&["validate", &typo]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));

    let unknown = write_scenario(
        tmp.path(),
        "gen.json",
        r#"{"schema": 1, "name": "t", "constellation": {"generator": "spiral"},
            "experiment": {"type": "cesaro", "kind": "one_sided", "ns": [1, 2]}}"#,
    );
    let o = run_in(&["validate", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spiral"));

    let o = run_in(&["run", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_platoon_exits_with_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write_scenario(
        tmp.path(),
        "unstable.json",
        r#"{"schema": 1, "name": "unstable",
            "experiment": {"type": "platoon",
                           "params": {"c1": 0, "c2": 1, "c3": 0},
                           "initial": {"y": [[20, 1.0]], "v": [[20, 1.0]], "a": []},
                           "window": [0, 99],
                           "t_grid": {"start": 1, "ratio": 1.5, "count": 12}}}"#,
    );
    let out = tmp.path().join("o");
    let o = run_in(&["run", &f, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divergence"));
}

#[test]
fn validate_accepts_bundled_and_file_scenarios() {
    let o = run_in(&["validate", "ring-64"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok: ring-64"));
    let tmp = tempfile::tempdir().unwrap();
    let f = write_scenario(
        tmp.path(),
        "spec.json",
        r#"{"schema": 1, "name": "spec",
            "experiment": {"type": "spectrum", "params": {"c1": -0.5, "c2": -2, "c3": -2}, "grid_size": 128}}"#,
    );
    let out = tmp.path().join("out");
    let o = run_in(&["run", &f, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = read_json(&out.join("spectrum.json"));
    assert!(s["max_residual"].as_f64().unwrap() <= 1e-9);
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("theta,re_l1,re_l2,re_l3,im_l1,im_l2,im_l3\n"));
    assert_eq!(csv.lines().count(), 129);
}
