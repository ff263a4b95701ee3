//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde_json::Value;
use trawlsim_core::exponent::{convergence_diagnostic, integrated_exponent, kernel_moment, EXPONENT_TOL, LIMIT_TOL};
use trawlsim_core::levy::{LevyBasisSpec, LevyExponent};
use trawlsim_core::pathsim::{
    simulate_finite_activity_yt, simulate_limit_y, simulate_stable_levy, simulate_x_grid, SeriesBudget, XGridOptions,
};
use trawlsim_core::regime::{verify_hypotheses, Norming};
use trawlsim_core::stats::{ecf, increment_dependence, index_fit_from_curve, selfsim_index_fit, two_sample_ecf_test};
use trawlsim_core::trawl::{TimeCombo, TrawlSpec};

type Check = fn(&Path) -> Result<String, String>;

fn ensure(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, limit: Duration, detail: String) -> Result<String, String> {
    let took = start.elapsed();
    ensure(
        took <= limit,
        format!(
            "{detail}; {:.1}s of {:.0}s budget",
            took.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

fn poisson() -> (TrawlSpec, LevyExponent) {
    (
        TrawlSpec::canonical(1.0, 0.5).unwrap(),
        LevyExponent::new(LevyBasisSpec::poisson_difference(1.0, 1.0).unwrap()),
    )
}

fn trawlsim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_trawlsim"))
        .args(args)
        .env_remove("TRAWLSIM_THREADS")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn trawlsim_ok(args: &[&str]) -> Result<String, String> {
    let (code, stdout, stderr) = trawlsim(args);
    if code != 0 {
        return Err(format!("trawlsim {} exited {code}: {}", args.join(" "), stderr.trim()));
    }
    Ok(stdout)
}

fn kernel_scaling(_: &Path) -> Result<String, String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (kappa, gamma) in [(1.8, 0.5), (2.0, 0.5), (1.6, 0.3)] {
        let j1 = kernel_moment(kappa, gamma, 1.0, 1e-10).map_err(|e| e.to_string())?;
        for t in [0.5f64, 2.0, 4.0] {
            let jt = kernel_moment(kappa, gamma, t, 1e-10).map_err(|e| e.to_string())?;
            worst = worst.max((jt / j1 / t.powf(kappa - gamma) - 1.0).abs());
        }
    }
    ensure(worst <= 1e-4, format!("max relative error {worst:.2e}"))
        .and_then(|d| within(start, Duration::from_secs(10), d))
}

fn characteristic_functional(_: &Path) -> Result<String, String> {
    let start = Instant::now();
    let (trawl, levy) = poisson();
    let big_t: f64 = 1e3;
    let f_t = big_t.powf(2.0 / 3.0);
    let run = simulate_finite_activity_yt(&[1.0], big_t, &trawl, &levy, f_t, 10_000, 20_240_601, "")
        .map_err(|e| e.to_string())?;
    let y = run.ensemble.marginal(1.0).unwrap();
    let thetas = [0.25, 0.5, 1.0, 2.0];
    let curve = ecf(&y, &thetas).map_err(|e| e.to_string())?;
    let mut zs = Vec::new();
    for (k, &th) in thetas.iter().enumerate() {
        let combo = TimeCombo::new(vec![(th, 1.0)]).unwrap();
        let i = integrated_exponent(&combo, &trawl, &levy, big_t, f_t, EXPONENT_TOL).map_err(|e| e.to_string())?;
        zs.push((curve.values[k] - Complex64::new((-i.value).exp(), 0.0)).norm() / curve.std_errors[k]);
    }
    let max_z = zs.iter().cloned().fold(0.0, f64::max);
    ensure(max_z <= 3.0, format!("z-scores {zs:.2?} (max {max_z:.2})"))
        .and_then(|d| within(start, Duration::from_secs(120), d))
}

fn thm2_index(dir: &Path) -> Result<String, String> {
    let config = dir.join("thm2.json");
    fs::write(
        &config,
        r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5},
            "n_paths": 10000, "master_seed": 11,
            "simulation": {"T": 10000, "times": [0.5, 1.0]},
            "estimate": {"method": "stability", "increment": [0.5, 1.0]}}"#,
    )
    .unwrap();
    let out = dir.join("thm2");
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    trawlsim_ok(&["simulate", "--config", c, "--out", o, "--format", "bin"])?;
    let input = out.join("ensemble.bin");
    let text = trawlsim_ok(&[
        "estimate",
        "--config",
        c,
        "--out",
        o,
        "--input",
        input.to_str().unwrap(),
    ])?;
    let est: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let index = est["index_hat"].as_f64().ok_or("no index_hat")?;
    let window = (est["window"][0].as_f64().unwrap(), est["window"][1].as_f64().unwrap());

    // the noiseless index of the exact exponent on the same window, for reference
    let (trawl, levy) = poisson();
    let big_t: f64 = 1e4;
    let theta: Vec<f64> = (0..8)
        .map(|k| window.0 * (window.1 / window.0).powf(k as f64 / 7.0))
        .collect();
    let moduli: Vec<f64> = theta
        .iter()
        .map(|&th| {
            let c = TimeCombo::new(vec![(-th, 0.5), (th, 1.0)]).unwrap();
            (-integrated_exponent(&c, &trawl, &levy, big_t, big_t.powf(2.0 / 3.0), 1e-8)
                .unwrap()
                .value)
                .exp()
        })
        .collect();
    let exact = index_fit_from_curve(&theta, &moduli)
        .map_err(|e| e.to_string())?
        .index_hat;
    ensure(
        (index - 1.5).abs() <= 0.1,
        format!(
            "index_hat {index:.4} (CI {:.3}..{:.3}), target 1.5 ± 0.1; exact-exponent index on the window {exact:.4}",
            est["ci_low"].as_f64().unwrap_or(f64::NAN),
            est["ci_high"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn limit_process(_: &Path) -> Result<String, String> {
    let (alpha, gamma) = (1.8, 0.5);
    let times = [0.5, 1.0, 2.0];
    let e =
        simulate_limit_y(&times, alpha, gamma, &SeriesBudget::default(), 10_000, 31, "").map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for t in [1.0, 2.0] {
        let j = kernel_moment(alpha, gamma, t, 1e-10).map_err(|e| e.to_string())?;
        let th: Vec<f64> = [0.1f64, 0.5, 1.0, 2.0]
            .iter()
            .map(|l| (l / j).powf(1.0 / alpha))
            .collect();
        let c = ecf(&e.marginal(t).unwrap(), &th).map_err(|e| e.to_string())?;
        let z = c.max_z(|s| Complex64::new((-s.abs().powf(alpha) * j).exp(), 0.0));
        ok &= z <= 3.0;
        notes.push(format!("ECF max z at t={t}: {z:.2}"));
    }
    let m: Vec<Vec<f64>> = times.iter().map(|&t| e.marginal(t).unwrap()).collect();
    let fit = selfsim_index_fit(&[(0.5, &m[0]), (1.0, &m[1]), (2.0, &m[2])]).map_err(|e| e.to_string())?;
    let h = 1.0 - gamma / alpha;
    ok &= (fit.index_hat - h).abs() <= 0.05;
    notes.push(format!("H {:.4} vs {h:.4}", fit.index_hat));
    let d = increment_dependence(&e, (0.0, 1.0), (1.0, 2.0), None, 200, 31).map_err(|e| e.to_string())?;
    ok &= d.z() > 3.0;
    notes.push(format!("limit D/SE {:.1}", d.z()));
    let l = simulate_stable_levy(&times, 1.2, 10_000, 32, "").map_err(|e| e.to_string())?;
    let dl = increment_dependence(&l, (0.0, 1.0), (1.0, 2.0), None, 200, 32).map_err(|e| e.to_string())?;
    ok &= dl.z() <= 3.0;
    notes.push(format!("Lévy D/SE {:.1}", dl.z()));
    ensure(ok, notes.join("; "))
}

fn convergence(_: &Path) -> Result<String, String> {
    let start = Instant::now();
    let combo = TimeCombo::single(1.0).unwrap();
    let stable = |a| LevyExponent::new(LevyBasisSpec::stable(a).unwrap());
    let (trawl, poisson_levy) = poisson();
    let short = [1e2, 1e3, 1e4, 1e5];
    let long = [1e3, 1e4, 1e5, 1e6];
    let cases = [
        ("THM1", stable(1.8), &short[..], None),
        ("THM2", poisson_levy, &short[..], None),
        ("THM3", stable(1.2), &short[..], None),
        ("CRITICAL", stable(1.5), &long[..], Some(Norming::critical(1.5))),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, levy, grid, norming) in cases {
        let report = verify_hypotheses(levy.spec(), trawl.gamma()).map_err(|e| e.to_string())?;
        let norming = norming.or(report.norming).ok_or("unclassified")?;
        let diag = convergence_diagnostic(
            report.regime,
            norming,
            &combo,
            &trawl,
            &levy,
            grid,
            EXPONENT_TOL,
            LIMIT_TOL,
        )
        .map_err(|e| format!("{name}: {e}"))?;
        let gaps = diag.rel_gaps();
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        ok &= decreasing && report.regime.as_str() == name;
        notes.push(format!(
            "{name} {}",
            gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(" > ")
        ));
    }
    ensure(ok, notes.join("; ")).and_then(|d| within(start, Duration::from_secs(300), d))
}

fn thm3_audit(dir: &Path) -> Result<String, String> {
    let config = dir.join("thm3.json");
    fs::write(
        &config,
        r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.2}, "trawl": {"gamma": 0.5},
            "T_grid": [1000, 10000, 100000, 1000000]}"#,
    )
    .unwrap();
    let out = dir.join("thm3");
    trawlsim_ok(&[
        "verify-exponent",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])?;
    let audit: Value =
        serde_json::from_str(&fs::read_to_string(out.join("thm3_audit.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let verdict = audit["verdict"].as_str().ok_or("audit has no verdict")?;
    Ok(format!(
        "observed {:.5}, proof form {:.5} ({:.2}%), displayed form {:.5} ({:.2}%), verdict {verdict}",
        audit["observed_limit"].as_f64().unwrap(),
        audit["proof_form"].as_f64().unwrap(),
        100.0 * audit["proof_rel_diff"].as_f64().unwrap(),
        audit["displayed_form"].as_f64().unwrap(),
        100.0 * audit["displayed_rel_diff"].as_f64().unwrap(),
    ))
}

fn determinism(dir: &Path) -> Result<String, String> {
    let configs = [
        (
            "finite",
            r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5},
                "T_grid": [100, 1000], "n_paths": 500, "master_seed": 5,
                "simulation": {"T": 100, "times": [0.5, 1.0]}}"#,
            "simulate",
            "ensemble.bin",
        ),
        (
            "stable",
            r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5},
                "T_grid": [100, 1000], "n_paths": 300, "master_seed": 6,
                "budget": {"n_terms": 200}, "simulation": {"T": 100, "times": [0.5, 1.0]}}"#,
            "simulate",
            "ensemble.bin",
        ),
        (
            "limit",
            r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5},
                "n_paths": 300, "master_seed": 7, "budget": {"n_terms": 200}, "limit": {"times": [0.5, 1.0, 2.0]}}"#,
            "limit-process",
            "limit.bin",
        ),
        (
            "exponent",
            r#"{"levy": {"kind": "poisson_difference", "lambda": 1.0}, "trawl": {"gamma": 0.5}, "T_grid": [100, 1000, 10000]}"#,
            "verify-exponent",
            "exponent.csv",
        ),
    ];
    let mut notes = Vec::new();
    for (name, text, command, file) in configs {
        let config = dir.join(format!("det_{name}.json"));
        fs::write(&config, text).unwrap();
        let mut bytes = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.join(format!("det_{name}_{threads}"));
            trawlsim_ok(&[
                command,
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--format",
                "bin",
                "--threads",
                threads,
            ])?;
            bytes.push(fs::read(out.join(file)).map_err(|e| e.to_string())?);
        }
        if bytes[0] != bytes[1] {
            return Err(format!("{name}: {file} differs between 1 and 8 threads"));
        }
        notes.push(format!("{name} {} bytes identical", bytes[0].len()));
    }
    Ok(notes.join("; "))
}

fn dual_simulators(_: &Path) -> Result<String, String> {
    let (trawl, levy) = poisson();
    let big_t: f64 = 1e2;
    let f_t = big_t.powf(2.0 / 3.0);
    let n = 10_000;
    let kern =
        simulate_finite_activity_yt(&[0.5, 1.0], big_t, &trawl, &levy, f_t, n, 81, "").map_err(|e| e.to_string())?;
    let grid = simulate_x_grid(
        &trawl,
        &levy,
        &[0.0],
        &[0.5, 1.0],
        big_t,
        f_t,
        &XGridOptions::default(),
        n,
        82,
        "",
    )
    .map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for t in [0.5, 1.0] {
        let a = kern.ensemble.marginal(t).unwrap();
        let b = grid.integrated.marginal(t).unwrap();
        let test = two_sample_ecf_test(&a, &b, None).map_err(|e| e.to_string())?;
        ok &= test.passes(0.01);
        notes.push(format!(
            "t={t}: chi2 {:.2} on {} dof, p {:.3}",
            test.statistic, test.dof, test.p_value
        ));
    }
    ensure(ok, notes.join("; "))
}

fn main() {
    let checks: [(u32, &str, Check); 8] = [
        (1, "kernel scaling law", kernel_scaling),
        (2, "characteristic-functional oracle", characteristic_functional),
        (3, "THM2 stability index", thm2_index),
        (4, "limit process law, self-similarity, dependence", limit_process),
        (5, "exponent convergence per regime", convergence),
        (6, "THM3 constant audit", thm3_audit),
        (7, "determinism across thread counts", determinism),
        (8, "dual-simulator equivalence", dual_simulators),
    ];
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut failed = Vec::new();
    for (n, name, check) in checks {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(|| check(dir.path()))).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} PASS [{name}] ({secs:.1}s): {detail}"),
            Err(detail) => {
                println!("criterion {n} FAIL [{name}] ({secs:.1}s): {detail}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria pass");
}
