use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use trawlsim_core::config::RunManifest;

fn trawlsim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_trawlsim"))
        .args(args)
        .env_remove("TRAWLSIM_THREADS")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const THM2: &str = r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5},
    "T_grid": [100, 1000, 10000], "n_paths": 400, "master_seed": 3,
    "simulation": {"T": 100, "times": [0.5, 1.0]}}"#;

#[test]
fn classify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(
        d,
        "s.json",
        r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5}}"#,
    );
    let (code, stdout, _) = trawlsim(&["classify", "--config", &c, "--out", d.join("a").to_str().unwrap()]);
    assert_eq!(code, 0);
    let r: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(r["regime"], "THM1");
    assert!((r["hurst"].as_f64().unwrap() - (1.0 - 0.5 / 1.8)).abs() < 1e-12);

    let c = write_config(d, "p.json", THM2);
    let (code, stdout, _) = trawlsim(&["classify", "--config", &c, "--out", d.join("b").to_str().unwrap()]);
    assert_eq!(code, 0);
    let r: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(r["regime"], "THM2");
    assert!((r["norming"]["power"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);

    let c = write_config(
        d,
        "bad.json",
        r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 1.5}}"#,
    );
    let (code, _, stderr) = trawlsim(&["classify", "--config", &c, "--out", d.join("c").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("trawl.gamma"), "{stderr}");

    let c = write_config(
        d,
        "empty.json",
        r#"{"levy": {"kind": "poisson_difference", "lambda": 0.0}, "trawl": {"gamma": 0.5}}"#,
    );
    let (code, _, _) = trawlsim(&["classify", "--config", &c, "--out", d.join("e").to_str().unwrap()]);
    assert_eq!(code, 3);

    let (code, _, _) = trawlsim(&["classify", "--out", d.join("f").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn verify_exponent_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(d, "p.json", THM2);
    let out = d.join("v");
    let (code, stdout, _) = trawlsim(&["verify-exponent", "--config", &c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("exponent.csv")).unwrap();
    assert_eq!(csv, stdout);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "T,F_T,I_T,I_limit,rel_gap,regime,tol_achieved");
    let gaps: Vec<f64> = lines.map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(gaps.len(), 3);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");

    let (code, _, _) = trawlsim(&["verify-exponent", "--config", &c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "rerun without --force must refuse");
    let (code, _, _) = trawlsim(&[
        "verify-exponent",
        "--config",
        &c,
        "--out",
        out.to_str().unwrap(),
        "--force",
    ]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(out.join("exponent.csv")).unwrap(), csv);

    let e = write_config(
        d,
        "e.json",
        r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5}, "T_grid": []}"#,
    );
    let (code, _, stderr) = trawlsim(&[
        "verify-exponent",
        "--config",
        &e,
        "--out",
        d.join("w").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("T_grid"));
}

#[test]
fn accuracy_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(
        d,
        "tight.json",
        r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5},
            "T_grid": [100], "tolerance": {"exponent": 1e-17}}"#,
    );
    let (code, _, stderr) = trawlsim(&[
        "verify-exponent",
        "--config",
        &c,
        "--out",
        d.join("v").to_str().unwrap(),
    ]);
    assert_eq!(code, 4, "{stderr}");
}

#[test]
fn simulate_manifest_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(d, "p.json", THM2);
    let mut sums = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "8"), ("c", "2")] {
        let out = d.join(name);
        let (code, _, stderr) = trawlsim(&[
            "simulate",
            "--config",
            &c,
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code, 0, "{stderr}");
        let m = RunManifest::read(&out).unwrap();
        m.verify(&out).unwrap();
        let entry = m.files.iter().find(|f| f.path == "ensemble.csv").unwrap();
        sums.push(entry.sha256.clone());
    }
    assert!(sums.iter().all(|s| *s == sums[0]));

    let out = d.join("env");
    let run = Command::new(env!("CARGO_BIN_EXE_trawlsim"))
        .args(["simulate", "--config", &c, "--out", out.to_str().unwrap()])
        .env("TRAWLSIM_THREADS", "3")
        .output()
        .unwrap();
    assert!(run.status.success());
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(
        m.files.iter().find(|f| f.path == "ensemble.csv").unwrap().sha256,
        sums[0]
    );

    let (code, _, _) = trawlsim(&[
        "simulate",
        "--config",
        &c,
        "--out",
        d.join("s").to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert_eq!(code, 0);
    let other = RunManifest::read(&d.join("s")).unwrap();
    assert_ne!(
        other.files.iter().find(|f| f.path == "ensemble.csv").unwrap().sha256,
        sums[0]
    );
    assert_eq!(other.master_seed, 4);

    let z = write_config(
        d,
        "z.json",
        r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5}, "n_paths": 0}"#,
    );
    let (code, _, _) = trawlsim(&["simulate", "--config", &z, "--out", d.join("z").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn simulate_other_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(
        d,
        "x.json",
        r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5}, "n_paths": 200,
            "simulation": {"T": 50, "times": [0.5, 1.0], "method": "x_grid", "x_grid": {"window": 20}}}"#,
    );
    let out = d.join("x");
    let (code, _, stderr) = trawlsim(&["simulate", "--config", &c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(out.join("trawl_x.csv").exists());

    let w = write_config(
        d,
        "w.json",
        r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5}, "n_paths": 20,
            "simulation": {"T": 50, "method": "x_grid", "x_grid": {"window": 1, "exact_past": false}}}"#,
    );
    let (code, _, stderr) = trawlsim(&["simulate", "--config", &w, "--out", d.join("w").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("window"), "{stderr}");

    let s = write_config(
        d,
        "s.json",
        r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5}, "n_paths": 50,
            "budget": {"n_terms": 100}, "simulation": {"T": 100}, "limit": {"times": [0.5, 1.0]}}"#,
    );
    let out = d.join("s");
    let (code, _, stderr) = trawlsim(&[
        "simulate",
        "--config",
        &s,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "bin",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let meta: Value = serde_json::from_str(&fs::read_to_string(out.join("ensemble_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["meta"]["process_kind"], "stable_yt");
    assert!(meta["meta"]["truncation"]["error_bound"].as_f64().unwrap() > 0.0);
    let (code, _, stderr) = trawlsim(&[
        "limit-process",
        "--config",
        &s,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "bin",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(out.join("limit.bin").exists());

    let t = write_config(
        d,
        "t.json",
        r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.2}, "trawl": {"gamma": 0.5}, "n_paths": 10}"#,
    );
    let (code, _, _) = trawlsim(&["limit-process", "--config", &t, "--out", d.join("t").to_str().unwrap()]);
    assert_eq!(code, 2, "limit process needs alpha > 1 + gamma");
}

#[test]
fn estimate_errors_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(d, "p.json", THM2);
    let out = d.join("o");
    let o = out.to_str().unwrap();
    let (code, _, _) = trawlsim(&[
        "estimate",
        "--config",
        &c,
        "--out",
        o,
        "--input",
        d.join("missing.bin").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    let bad = d.join("bad.bin");
    fs::write(&bad, b"XXXXX\0\0\0\0\0\0\0\0").unwrap();
    let (code, _, stderr) = trawlsim(&["estimate", "--config", &c, "--out", o, "--input", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("format error"), "{stderr}");

    let (code, _, _) = trawlsim(&["simulate", "--config", &c, "--out", o, "--format", "bin"]);
    assert_eq!(code, 0);
    let (code, stdout, stderr) = trawlsim(&[
        "estimate",
        "--config",
        &c,
        "--out",
        o,
        "--input",
        out.join("ensemble.bin").to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let r: Value = serde_json::from_str(&stdout).unwrap();
    for key in ["index_hat", "ci_low", "ci_high", "r_squared", "window", "method"] {
        assert!(!r[key].is_null(), "missing {key}");
    }
    assert!(r["ci_low"].as_f64().unwrap() <= r["index_hat"].as_f64().unwrap());
    let m = RunManifest::read(&out).unwrap();
    assert!(m.files.iter().any(|f| f.path == "estimate.json"));
    m.verify(&out).unwrap();
}

#[test]
fn figures_data_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_config(
        d,
        "f.json",
        r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5}, "n_paths": 5,
            "budget": {"n_terms": 100}}"#,
    );
    let out = d.join("fig");
    let (code, _, stderr) = trawlsim(&["figures-data", "--config", &c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let index: Value = serde_json::from_str(&fs::read_to_string(out.join("figures.json")).unwrap()).unwrap();
    let panels = index["panels"].as_array().unwrap();
    assert_eq!(panels.len(), 4);
    for p in panels {
        let text = fs::read_to_string(out.join(p["file"].as_str().unwrap())).unwrap();
        assert!(text.starts_with("time,"));
        assert_eq!(text.lines().count(), 6);
    }
    let conv = index["convergence"].as_array().unwrap();
    assert_eq!(conv.len(), 4);
    let crit = fs::read_to_string(out.join("convergence_critical.csv")).unwrap();
    assert!(crit.starts_with("T,F_T,I_T,I_limit,rel_gap,regime,tol_achieved"));
    RunManifest::read(&out).unwrap().verify(&out).unwrap();
}
