use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pbdw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbdw"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn pbdw")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.json");
    fs::write(
        &p,
        r#"{
  "geometry": {
    "extent_x": 25.0, "extent_y": 25.0, "nx": 15, "ny": 10,
    "regions": [
      {"name": "core", "box": [0.0, 15.0, 0.0, 15.0]},
      {"name": "void", "box": [15.0, 20.0, 0.0, 5.0]}
    ],
    "background": "reflector",
    "bc": {"xmin": "reflective", "xmax": "vacuum", "ymin": "reflective", "ymax": "vacuum"}
  },
  "sn_order": 2,
  "sensors": {"sx": 3, "sy": 2},
  "n_range": [1, 4],
  "threads": 2
}"#,
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

#[test]
fn info_reports_problem_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = pbdw(&["--config", &cfg, "info"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sensors"], 6);
    assert_eq!(v["directions"], 4);
    assert_eq!(v["mesh"]["cells"], 150);
    assert_eq!(v["training_points"], 243);
    assert_eq!(v["test_points"], 32);

    let out = pbdw(&["info"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sensors"], 54);
    assert_eq!(v["directions"], 12);
}

#[test]
fn full_workflow_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("run");
    let o = out_dir.to_str().unwrap();

    let out = pbdw(&["--config", &cfg, "--out", o, "snapshots", "--model", "diffusion", "--set", "training"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["count"], 243);
    assert!(out_dir.join("snapshots/diffusion_training/manifest.json").exists());
    assert!(out_dir.join("snapshots/diffusion_training/snap_242.csv").exists());

    for id in ["1", "2"] {
        let out = pbdw(&["--config", &cfg, "--out", o, "--threads", "1", "case", "--id", id]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = fs::read_to_string(out_dir.join(format!("case{id}.csv"))).unwrap();
        assert!(csv.starts_with("n,beta,delta_wc,delta_ms,err_wc,bound,eta_norm_mean\n"));
        assert_eq!(csv.lines().count(), 5);
    }
    assert!(out_dir.join("snapshots/transport_test/manifest.json").exists());

    let out = pbdw(&["--config", &cfg, "--out", o, "noise-sweep", "--eps", "1e-3,1e-2", "--seeds", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"], 16);
    assert_eq!(v["bound_violations"], 0);
    let csv = fs::read_to_string(out_dir.join("noise_sweep.csv")).unwrap();
    assert!(csv.starts_with("eps,seed,n,beta,delta_wc,eps_model,err_wc,bound\n"));

    // without an output directory the CSV goes to stdout, and repeats exactly
    let a = pbdw(&["--config", &cfg, "case", "--id", "1"]);
    let b = pbdw(&["--config", &cfg, "case", "--id", "1"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        String::from_utf8(a.stdout).unwrap().trim_end(),
        fs::read_to_string(out_dir.join("case1.csv")).unwrap().trim_end()
    );
}

#[test]
fn failures_are_json_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();

    let out = pbdw(&["case", "--id", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");

    let out = pbdw(&["--config", dir.path().join("missing.json").to_str().unwrap(), "info"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "io");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n_range": [1, 99]}"#).unwrap();
    let out = pbdw(&["--config", bad.to_str().unwrap(), "info"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("n_range"));

    fs::write(&bad, r#"{"sensors": {"sx": 7, "sy": 6}}"#).unwrap();
    let out = pbdw(&["--config", bad.to_str().unwrap(), "info"]);
    assert_ne!(out.status.code(), Some(0));
    error_json(&out);

    let out = pbdw(&["--threads", "0", "info"]);
    assert_eq!(out.status.code(), Some(2));

    let out = pbdw(&["noise-sweep", "--eps", "abc"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}
