use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn landau(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_landau"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("LANDAU_THREADS", t),
        None => cmd.env_remove("LANDAU_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

fn sim_config(n: usize, dt: f64, t_end: f64) -> Value {
    json!({
        "n": n, "dim": 3, "dt": dt, "t_end": t_end, "seed": 9,
        "model": {"model": "maxwell"},
        "init": {"kind": "gaussian", "mean": [0.0, 0.0, 0.0], "cov": [[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]},
        "snapshot_stride": 5
    })
}

fn files(dir: &Path) -> Vec<String> {
    if !dir.exists() {
        return Vec::new();
    }
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_three_files_with_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    write_json(&cfg, &sim_config(20, 0.01, 0.1));
    let out = tmp.path().join("run");
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out), vec!["manifest.json", "moments.csv", "snapshots.csv"]);
    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["command"], "simulate");
    for entry in manifest["outputs"].as_array().unwrap() {
        let bytes = fs::read(out.join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let moments = fs::read_to_string(out.join("moments.csv")).unwrap();
    // Snapshots at steps 0, 5 and 10.
    assert_eq!(moments.lines().count(), 4);
    assert!(moments.starts_with("t,mean_0,mean_1,mean_2,energy,c_00,"));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    write_json(&cfg, &sim_config(5, 0.01, 0.02));
    let out = tmp.path().join("run");
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "77"], None);
    assert_eq!(o.status.code(), Some(0));
    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["config"]["seed"], 77);
}

#[test]
fn bad_dt_exits_one_and_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    write_json(&cfg, &sim_config(5, -0.1, 1.0));
    let out = tmp.path().join("run");
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`dt`"));
    assert!(files(&out).is_empty());
}

#[test]
fn unknown_config_field_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    let mut v = sim_config(5, 0.01, 0.1);
    v["stepsize"] = json!(0.1);
    write_json(&cfg, &v);
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepsize"));
}

#[test]
fn blowup_exits_two_and_cleans_up() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    let mut v = sim_config(8, 1.0, 1000.0);
    v["init"]["cov"] = json!([[1e300, 0.0, 0.0], [0.0, 1e300, 0.0], [0.0, 0.0, 1e300]]);
    v["snapshot_stride"] = json!(1);
    write_json(&cfg, &v);
    let out = tmp.path().join("run");
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("blew up at step"));
    assert!(!out.exists(), "partial outputs left: {:?}", files(&out));
}

#[test]
fn transport_on_identical_clouds() {
    let tmp = tempfile::tempdir().unwrap();
    let mu = tmp.path().join("mu.csv");
    fs::write(&mu, "x0,x1\n0,0\n1,2\n-3,1\n").unwrap();
    let out = tmp.path().join("ot");
    let o = landau(&["transport", "--mu", mu.to_str().unwrap(), "--nu", mu.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(out.join("transport.json")).unwrap()).unwrap();
    assert_eq!(summary["cost"], 0.0);
    assert_eq!(summary["certificate"]["cyclically_monotone"], true);
    let plan = fs::read_to_string(out.join("plan.csv")).unwrap();
    assert!(plan.starts_with("src,dst,mass\n"));
    assert_eq!(files(&out), vec!["manifest.json", "plan.csv", "transport.json"]);
}

#[test]
fn transport_reads_config_and_snapshot_files() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.csv"), "t,particle,x0\n0,0,5\n0,1,6\n1,0,0\n1,1,1\n").unwrap();
    fs::write(tmp.path().join("b.csv"), "x0,weight\n0.5,1.0\n").unwrap();
    let cfg = tmp.path().join("ot.json");
    write_json(&cfg, &json!({"mu": "a.csv", "nu": "b.csv"}));
    let out = tmp.path().join("ot");
    let o = landau(&["transport", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(out.join("transport.json")).unwrap()).unwrap();
    assert_eq!(summary["cost"], 0.25);
}

#[test]
fn transport_input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mu = tmp.path().join("mu.csv");
    fs::write(&mu, "x0\n0\n").unwrap();
    let nu = tmp.path().join("nu.csv");
    fs::write(&nu, "x0,x1\n0,0\n").unwrap();
    let out = tmp.path().join("ot");
    let o = landau(&["transport", "--mu", mu.to_str().unwrap(), "--nu", nu.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    let o = landau(&["transport", "--mu", "/nonexistent.csv", "--nu", nu.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rates_default_one_dimensional_spec_passes_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("rates.json");
    write_json(&cfg, &json!({
        "kind": "empirical_rate",
        "base": {
            "n": 1, "dim": 1, "t_end": 0.0, "seed": 1,
            "model": {"model": "maxwell"},
            "init": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]}
        },
        "ns": [32, 64, 128, 256, 512],
        "replicas": 20
    }));
    let out = tmp.path().join("rates");
    let o = landau(&["rates", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&fs::read(out.join("rate_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed_bound"], true);
    assert_eq!(report["bound_exponent"], -0.4);
    assert!(report["manifest"]["seeds"].as_array().unwrap().len() == 20);
    assert_eq!(files(&out), vec!["manifest.json", "rate_replicas.csv", "rate_report.json"]);
}

#[test]
fn diagnose_frozen_single_particle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    write_json(&cfg, &sim_config(1, 0.01, 0.1));
    let run = tmp.path().join("run");
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let out = tmp.path().join("diag");
    let snaps = run.join("snapshots.csv");
    let o = landau(&["diagnose", "--snapshots", snaps.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d: Value = serde_json::from_slice(&fs::read(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["conservation"]["mean_drift"], 0.0);
    assert_eq!(d["conservation"]["energy_drift"], 0.0);
    assert!(d["anisotropy_decay"]["skipped"].is_string());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    write_json(&cfg, &sim_config(64, 0.01, 0.1));
    let mut runs = Vec::new();
    for (k, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(threads));
        assert_eq!(o.status.code(), Some(0));
        let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["threads"].as_u64().unwrap().to_string(), *threads);
        runs.push(out);
    }
    for f in ["snapshots.csv", "moments.csv"] {
        let first = fs::read(runs[0].join(f)).unwrap();
        for r in &runs[1..] {
            assert_eq!(first, fs::read(r.join(f)).unwrap(), "{f} differs");
        }
    }
}

#[test]
fn invalid_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    write_json(&cfg, &sim_config(4, 0.01, 0.02));
    let o = landau(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()], Some("zero"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LANDAU_THREADS"));
}

#[test]
fn missing_arguments_exit_one() {
    let o = landau(&["simulate"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = landau(&["--version"], None);
    assert_eq!(o.status.code(), Some(0));
}
