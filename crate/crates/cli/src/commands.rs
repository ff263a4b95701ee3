use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use trawlsim_core::config::{EstimateMethod, ExperimentConfig, LoadedConfig, SimulationMethod};
use trawlsim_core::exponent::{convergence_diagnostic, thm3_audit, ExponentReport, EXPONENT_TOL, LIMIT_TOL};
use trawlsim_core::levy::{LevyBasisSpec, LevyExponent};
use trawlsim_core::pathsim::{
    read_ensemble, simulate_finite_activity_yt, simulate_limit_y, simulate_stable_yt, simulate_x_grid, EnsembleFormat,
    EnsembleMeta, PathEnsemble, SeriesBudget,
};
use trawlsim_core::regime::{verify_hypotheses, Norming, Regime, RegimeReport};
use trawlsim_core::stats::{
    bootstrap_percentile, increment_dependence, selfsim_index_fit, stability_index_ci, stability_index_fit,
};
use trawlsim_core::trawl::{TimeCombo, TrawlSpec};

use crate::output::OutputDir;
use crate::{Cli, CliError, Command};

const DEFAULT_OUT: &str = "trawlsim-out";

/// The limit-process panels emitted by `figures-data`, all with `α > 1 + γ`.
pub const FIGURE_PANELS: [(f64, f64); 4] = [(1.8, 0.5), (1.8, 0.2), (1.4, 0.3), (1.9, 0.8)];
const FIGURE_PATHS: usize = 100;
const FIGURE_T_GRID: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];

struct Run {
    loaded: LoadedConfig,
    seed: u64,
    out: PathBuf,
    format: EnsembleFormat,
}

fn load(cli: &Cli) -> Result<Run, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let loaded = ExperimentConfig::load(path)?;
    finish_load(cli, loaded)
}

fn finish_load(cli: &Cli, loaded: LoadedConfig) -> Result<Run, CliError> {
    let format = match &cli.format {
        Some(f) => EnsembleFormat::parse(f)?,
        None => loaded.config.output.format,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| loaded.config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Run {
        seed: cli.seed.unwrap_or(loaded.config.master_seed),
        loaded,
        out,
        format,
    })
}

impl Run {
    fn config(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    fn open(&self, cli: &Cli, command: &str) -> Result<OutputDir, CliError> {
        OutputDir::open(&self.out, cli.force, command, &self.loaded.hash, self.seed)
    }

    fn model(&self) -> Result<(LevyExponent, TrawlSpec), CliError> {
        Ok((
            LevyExponent::new(self.config().levy.to_spec()?),
            self.config().trawl.to_spec()?,
        ))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Classify => classify(cli),
        Command::VerifyExponent => verify_exponent(cli),
        Command::Simulate => simulate(cli),
        Command::LimitProcess => limit_process(cli),
        Command::Estimate { input } => estimate(cli, input.as_deref()),
        Command::FiguresData => figures_data(cli),
    }
}

fn classified(report: &RegimeReport) -> Result<(), CliError> {
    if report.regime == Regime::Unclassified {
        return Err(CliError::Unclassified(format!(
            "regime could not be classified: {}",
            report.notes.join("; ")
        )));
    }
    Ok(())
}

fn classify(cli: &Cli) -> Result<(), CliError> {
    let run = load(cli)?;
    let mut out = run.open(cli, "classify")?;
    let spec = run.config().levy.to_spec()?;
    let report = verify_hypotheses(&spec, run.config().trawl.gamma)?;
    out.emit_json("regime.json", &report)?;
    out.finish()?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    classified(&report)
}

/// `T,F_T,I_T,I_limit,rel_gap,regime,tol_achieved`
pub fn exponent_csv(report: &ExponentReport) -> String {
    let mut s = String::from("T,F_T,I_T,I_limit,rel_gap,regime,tol_achieved\n");
    for (k, gap) in report.rel_gaps().iter().enumerate() {
        let i = report.i_values[k];
        let achieved = if i != 0.0 {
            report.i_errors[k] / i.abs()
        } else {
            report.i_errors[k]
        };
        writeln!(
            s,
            "{},{},{},{},{},{},{:e}",
            report.t_grid[k], report.f_values[k], i, report.limit.value, gap, report.regime, achieved
        )
        .unwrap();
    }
    s
}

fn norming_for(run: &Run, report: &RegimeReport) -> Result<Norming, CliError> {
    if let Some(n) = run.config().simulation.norming {
        return Ok(n);
    }
    classified(report)?;
    Ok(report.norming.expect("classified regimes carry a norming"))
}

fn verify_exponent(cli: &Cli) -> Result<(), CliError> {
    let run = load(cli)?;
    let (levy, trawl) = run.model()?;
    let report = verify_hypotheses(levy.spec(), trawl.gamma())?;
    classified(&report)?;
    let norming = norming_for(&run, &report)?;
    let mut out = run.open(cli, "verify-exponent")?;
    let cfg = run.config();
    let diag = convergence_diagnostic(
        report.regime,
        norming,
        &cfg.combo,
        &trawl,
        &levy,
        &cfg.t_grid,
        cfg.tolerance.exponent,
        cfg.tolerance.limit,
    )?;
    let csv = exponent_csv(&diag);
    out.emit("exponent.csv", csv.as_bytes())?;
    if report.regime == Regime::Thm3 {
        out.lap("thm3-audit");
        let audit = thm3_audit(&cfg.combo, &trawl, &levy, &cfg.t_grid, cfg.tolerance.exponent)?;
        out.emit_json("thm3_audit.json", &audit)?;
        eprintln!(
            "THM3 audit: observed {:.6}, proof form {:.6}, displayed form {:.6}, verdict {}",
            audit.observed_limit, audit.proof_form, audit.displayed_form, audit.verdict
        );
    }
    out.finish()?;
    print!("{csv}");
    Ok(())
}

#[derive(Serialize)]
struct SimulationInfo<'a> {
    meta: &'a EnsembleMeta,
    regime: Regime,
    method: SimulationMethod,
    #[serde(rename = "T")]
    big_t: f64,
    #[serde(rename = "F_T")]
    f_t: f64,
    norming: Norming,
    n_paths: usize,
    expected_points: Option<f64>,
}

fn ensemble_name(stem: &str, format: EnsembleFormat) -> String {
    format!("{stem}.{}", format.extension())
}

fn simulate(cli: &Cli) -> Result<(), CliError> {
    let run = load(cli)?;
    let (levy, trawl) = run.model()?;
    let cfg = run.config();
    let report = verify_hypotheses(levy.spec(), trawl.gamma())?;
    let norming = norming_for(&run, &report)?;
    let sim = &cfg.simulation;
    let f_t = norming.eval(sim.big_t);
    let method = match sim.method {
        SimulationMethod::Auto if levy.pure_stable().is_some() => SimulationMethod::StableSeries,
        SimulationMethod::Auto => SimulationMethod::Kernel,
        m => m,
    };
    let mut out = run.open(cli, "simulate")?;
    let hash = run.loaded.hash.as_str();
    let mut expected_points = None;
    let mut extra = None;
    let ensemble = match method {
        SimulationMethod::Kernel => {
            let r =
                simulate_finite_activity_yt(&sim.times, sim.big_t, &trawl, &levy, f_t, cfg.n_paths, run.seed, hash)?;
            expected_points = Some(r.expected_points);
            r.ensemble
        }
        SimulationMethod::StableSeries => {
            let alpha = levy.pure_stable().ok_or_else(|| {
                CliError::Config("simulation.method: stable_series needs a symmetric_stable base".into())
            })?;
            simulate_stable_yt(
                &sim.times,
                sim.big_t,
                &trawl,
                alpha,
                f_t,
                &cfg.budget,
                cfg.n_paths,
                run.seed,
                hash,
            )?
        }
        SimulationMethod::XGrid => {
            let x_times: Vec<f64> = sim.times.iter().map(|t| t * sim.big_t).collect();
            let options = sim.x_grid.unwrap_or_default();
            let r = simulate_x_grid(
                &trawl,
                &levy,
                &x_times,
                &sim.times,
                sim.big_t,
                f_t,
                &options,
                cfg.n_paths,
                run.seed,
                hash,
            )?;
            extra = Some(r.x);
            r.integrated
        }
        SimulationMethod::Auto => unreachable!(),
    };
    out.lap("write");
    out.emit(&ensemble_name("ensemble", run.format), &ensemble.encode(run.format))?;
    if let Some(x) = &extra {
        out.emit(&ensemble_name("trawl_x", run.format), &x.encode(run.format))?;
    }
    let info = SimulationInfo {
        meta: &ensemble.meta,
        regime: report.regime,
        method,
        big_t: sim.big_t,
        f_t,
        norming,
        n_paths: ensemble.n_paths(),
        expected_points,
    };
    out.emit_json("ensemble_meta.json", &info)?;
    let dir = out.finish()?;
    eprintln!("wrote {} paths, manifest {}", ensemble.n_paths(), dir.display());
    Ok(())
}

fn limit_params(run: &Run) -> Result<(f64, f64), CliError> {
    let cfg = run.config();
    let alpha = match cfg.limit.alpha {
        Some(a) => a,
        None => LevyExponent::new(cfg.levy.to_spec()?)
            .pure_stable()
            .ok_or_else(|| CliError::Config("limit.alpha: required unless levy is symmetric_stable".into()))?,
    };
    Ok((alpha, cfg.limit.gamma.unwrap_or(cfg.trawl.gamma)))
}

fn limit_process(cli: &Cli) -> Result<(), CliError> {
    let run = load(cli)?;
    let (alpha, gamma) = limit_params(&run)?;
    let cfg = run.config();
    let mut out = run.open(cli, "limit-process")?;
    let e = simulate_limit_y(
        &cfg.limit.times,
        alpha,
        gamma,
        &cfg.budget,
        cfg.n_paths,
        run.seed,
        &run.loaded.hash,
    )?;
    out.lap("write");
    out.emit(&ensemble_name("limit", run.format), &e.encode(run.format))?;
    out.emit_json(
        "limit_meta.json",
        &json!({ "meta": e.meta, "alpha": alpha, "gamma": gamma, "hurst": 1.0 - gamma / alpha, "n_paths": e.n_paths() }),
    )?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct IndexEstimate {
    method: &'static str,
    index_hat: f64,
    ci_low: f64,
    ci_high: f64,
    r_squared: f64,
    window: (f64, f64),
    n_points: usize,
    n_samples: usize,
    times: Vec<f64>,
}

fn grid_time(e: &PathEnsemble, t: f64) -> Result<f64, CliError> {
    Ok(e.times()[e.time_index(t)?])
}

fn estimate(cli: &Cli, input: Option<&Path>) -> Result<(), CliError> {
    let run = load(cli)?;
    let cfg = run.config();
    let est = &cfg.estimate;
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| est.input.clone())
        .ok_or_else(|| CliError::Config("estimate: no input ensemble (use --input or estimate.input)".into()))?;
    let e = read_ensemble(&input)?;
    // binary ensembles record the seed they were simulated with
    let seed = if e.meta.config_hash.is_empty() {
        run.seed
    } else {
        e.meta.master_seed
    };
    let mut out = run.open(cli, "estimate")?;
    let times = e.times();
    let value = match est.method {
        EstimateMethod::Stability => {
            let (s, t) = match est.increment {
                Some(p) => p,
                None if times.len() >= 2 => (times[times.len() - 2], times[times.len() - 1]),
                None => (0.0, times[0]),
            };
            let sample = if s == 0.0 && e.time_index(0.0).is_err() {
                e.marginal(t)?
            } else {
                e.increments(s, t)?
            };
            let fit = stability_index_fit(&sample, est.window)?;
            let (ci_low, ci_high) = stability_index_ci(&sample, &fit, est.bootstrap, seed)?;
            serde_json::to_value(IndexEstimate {
                method: "stability",
                index_hat: fit.index_hat,
                ci_low,
                ci_high,
                r_squared: fit.r_squared,
                window: fit.theta_window,
                n_points: fit.n_points,
                n_samples: sample.len(),
                times: vec![s, t],
            })
        }
        EstimateMethod::Selfsim => {
            let last = times[times.len() - 1];
            let base = est.base_time.unwrap_or(last / 4.0);
            let scales: Vec<f64> = [1.0, 2.0, 4.0]
                .iter()
                .map(|c| grid_time(&e, base * c))
                .collect::<Result<_, _>>()?;
            let marginals: Vec<Vec<f64>> = scales.iter().map(|&t| e.marginal(t)).collect::<Result<_, _>>()?;
            let pairs =
                |m: &[Vec<f64>]| -> Vec<(f64, Vec<f64>)> { scales.iter().copied().zip(m.iter().cloned()).collect() };
            let fit_of = |p: &[(f64, Vec<f64>)]| {
                let refs: Vec<(f64, &[f64])> = p.iter().map(|(t, v)| (*t, v.as_slice())).collect();
                selfsim_index_fit(&refs)
            };
            let fit = fit_of(&pairs(&marginals))?;
            let (ci_low, ci_high) = bootstrap_percentile(e.n_paths(), est.bootstrap, seed, 0.95, |idx| {
                let m: Vec<Vec<f64>> = marginals.iter().map(|v| idx.iter().map(|&i| v[i]).collect()).collect();
                fit_of(&pairs(&m)).map(|f| f.index_hat)
            })?;
            serde_json::to_value(IndexEstimate {
                method: "selfsim",
                index_hat: fit.index_hat,
                ci_low,
                ci_high,
                r_squared: fit.r_squared,
                window: fit.theta_window,
                n_points: fit.n_points,
                n_samples: e.n_paths(),
                times: scales,
            })
        }
        EstimateMethod::Dependence => {
            let [first, second] = match est.intervals {
                Some(i) => i,
                None => {
                    let last = times[times.len() - 1];
                    let mid = grid_time(&e, last / 2.0)?;
                    [(0.0, mid), (mid, last)]
                }
            };
            let r = increment_dependence(&e, first, second, est.theta, est.bootstrap, seed)?;
            Ok(json!({
                "method": "dependence",
                "d": r.d,
                "std_error": r.std_error,
                "z": r.z(),
                "theta": r.theta,
                "intervals": [first, second],
                "n_samples": r.n_samples,
            }))
        }
    }
    .expect("estimate serializes");
    out.emit_json("estimate.json", &value)?;
    out.finish()?;
    println!("{}", serde_json::to_string_pretty(&value).expect("estimate serializes"));
    Ok(())
}

/// Canonical configurations for the convergence tables, one per regime.
fn convergence_cases() -> Result<Vec<(&'static str, LevyBasisSpec, TrawlSpec, Norming)>, CliError> {
    let t = |g| TrawlSpec::canonical(1.0, g);
    Ok(vec![
        (
            "thm1",
            LevyBasisSpec::stable(1.8)?,
            t(0.5)?,
            Norming::power(1.0 - 0.5 / 1.8),
        ),
        (
            "thm2",
            LevyBasisSpec::poisson_difference(1.0, 1.0)?,
            t(0.5)?,
            Norming::power(1.0 / 1.5),
        ),
        ("thm3", LevyBasisSpec::stable(1.2)?, t(0.5)?, Norming::power(1.0 / 1.2)),
        ("critical", LevyBasisSpec::stable(1.5)?, t(0.5)?, Norming::critical(1.5)),
    ])
}

fn figures_data(cli: &Cli) -> Result<(), CliError> {
    let run = match &cli.config {
        Some(_) => load(cli)?,
        None => {
            let defaults = r#"{"levy": {"kind": "symmetric_stable", "alpha": 1.8}, "trawl": {"gamma": 0.5}}"#;
            let loaded = ExperimentConfig::from_json(defaults)?;
            finish_load(cli, loaded)?
        }
    };
    let cfg = run.config();
    let n_paths = cfg.n_paths.min(FIGURE_PATHS);
    let budget: &SeriesBudget = &cfg.budget;
    let mut out = run.open(cli, "figures-data")?;
    let mut panels = Vec::new();
    for (k, &(alpha, gamma)) in FIGURE_PANELS.iter().enumerate() {
        let e = simulate_limit_y(
            &cfg.limit.times,
            alpha,
            gamma,
            budget,
            n_paths,
            run.seed.wrapping_add(k as u64),
            &run.loaded.hash,
        )?;
        let name = format!("limit_paths_a{alpha}_g{gamma}.csv");
        out.emit(&name, e.to_csv().as_bytes())?;
        panels.push(
            json!({ "file": name, "alpha": alpha, "gamma": gamma, "n_paths": n_paths, "hurst": 1.0 - gamma / alpha }),
        );
    }
    out.lap("convergence");
    let combo = TimeCombo::single(1.0)?;
    let mut tables = Vec::new();
    for (name, spec, trawl, norming) in convergence_cases()? {
        let levy = LevyExponent::new(spec);
        let regime = verify_hypotheses(levy.spec(), trawl.gamma())?.regime;
        let diag = convergence_diagnostic(
            regime,
            norming,
            &combo,
            &trawl,
            &levy,
            &FIGURE_T_GRID,
            EXPONENT_TOL,
            LIMIT_TOL,
        )?;
        let file = format!("convergence_{name}.csv");
        out.emit(&file, exponent_csv(&diag).as_bytes())?;
        tables.push(json!({ "file": file, "regime": regime, "norming": norming.describe() }));
    }
    out.emit_json("figures.json", &json!({ "panels": panels, "convergence": tables }))?;
    out.finish()?;
    Ok(())
}
