//! Simulated ensembles against the deterministic exponent and kernel moments.

use num_complex::Complex64;
use trawlsim_core::exponent::{integrated_exponent, kernel_moment, EXPONENT_TOL};
use trawlsim_core::levy::{LevyBasisSpec, LevyExponent};
use trawlsim_core::pathsim::{
    simulate_finite_activity_yt, simulate_limit_y, simulate_stable_levy, simulate_x_grid, SeriesBudget, XGridOptions,
};
use trawlsim_core::stats::{
    ecf, increment_dependence, index_fit_from_curve, selfsim_index_fit, stability_index_fit, two_sample_ecf_test,
};
use trawlsim_core::trawl::{TimeCombo, TrawlSpec};

fn poisson() -> (TrawlSpec, LevyExponent) {
    (
        TrawlSpec::canonical(1.0, 0.5).unwrap(),
        LevyExponent::new(LevyBasisSpec::poisson_difference(1.0, 1.0).unwrap()),
    )
}

#[test]
fn finite_activity_ecf_matches_exponent() {
    let (trawl, levy) = poisson();
    let big_t: f64 = 1e3;
    let f_t = big_t.powf(2.0 / 3.0);
    let run = simulate_finite_activity_yt(&[1.0], big_t, &trawl, &levy, f_t, 10_000, 1, "").unwrap();
    let y = run.ensemble.marginal(1.0).unwrap();
    let thetas = [0.25, 0.5, 1.0, 2.0];
    let curve = ecf(&y, &thetas).unwrap();
    for (k, &th) in thetas.iter().enumerate() {
        let combo = TimeCombo::new(vec![(th, 1.0)]).unwrap();
        let i = integrated_exponent(&combo, &trawl, &levy, big_t, f_t, EXPONENT_TOL)
            .unwrap()
            .value;
        let z = (curve.values[k] - Complex64::new((-i).exp(), 0.0)).norm() / curve.std_errors[k];
        eprintln!(
            "theta {th}: ecf {:.5} target {:.5} z {z:.2}",
            curve.values[k].re,
            (-i).exp()
        );
        assert!(z <= 3.0);
    }
}

#[test]
fn thm2_increment_index_matches_oracle_curve() {
    let (trawl, levy) = poisson();
    let big_t: f64 = 1e4;
    let f_t = big_t.powf(2.0 / 3.0);
    let run = simulate_finite_activity_yt(&[0.5, 1.0], big_t, &trawl, &levy, f_t, 10_000, 2, "").unwrap();
    let inc = run.ensemble.increments(0.5, 1.0).unwrap();
    let fit = stability_index_fit(&inc, None).unwrap();
    let (lo, hi) = fit.theta_window;
    let theta: Vec<f64> = (0..8).map(|k| lo * (hi / lo).powf(k as f64 / 7.0)).collect();
    let moduli: Vec<f64> = theta
        .iter()
        .map(|&th| {
            let c = TimeCombo::new(vec![(-th, 0.5), (th, 1.0)]).unwrap();
            (-integrated_exponent(&c, &trawl, &levy, big_t, f_t, 1e-8).unwrap().value).exp()
        })
        .collect();
    let exact = index_fit_from_curve(&theta, &moduli).unwrap();
    eprintln!("monte carlo {:.4}, oracle {:.4}", fit.index_hat, exact.index_hat);
    assert!((fit.index_hat - exact.index_hat).abs() <= 0.05);
}

#[test]
fn limit_process_law_scaling_and_dependence() {
    let (alpha, gamma) = (1.8, 0.5);
    let times = [0.5, 1.0, 2.0];
    let e = simulate_limit_y(&times, alpha, gamma, &SeriesBudget::default(), 10_000, 3, "").unwrap();
    for t in [1.0, 2.0] {
        let j = kernel_moment(alpha, gamma, t, 1e-10).unwrap();
        let x = e.marginal(t).unwrap();
        let th: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|s| s / j.powf(1.0 / alpha)).collect();
        let c = ecf(&x, &th).unwrap();
        let z = c.max_z(|s| Complex64::new((-s.abs().powf(alpha) * j).exp(), 0.0));
        eprintln!("t {t}: max z {z:.2}");
        assert!(z <= 3.0);
    }
    let m: Vec<Vec<f64>> = times.iter().map(|&t| e.marginal(t).unwrap()).collect();
    let fit = selfsim_index_fit(&[(0.5, &m[0]), (1.0, &m[1]), (2.0, &m[2])]).unwrap();
    eprintln!("H {fit:?}");
    assert!((fit.index_hat - (1.0 - gamma / alpha)).abs() <= 0.05);
    let d = increment_dependence(&e, (0.0, 1.0), (1.0, 2.0), None, 200, 3).unwrap();
    eprintln!("limit {d:?}");
    assert!(d.z() > 3.0);
    let l = simulate_stable_levy(&times, 1.2, 10_000, 4, "").unwrap();
    let d = increment_dependence(&l, (0.0, 1.0), (1.0, 2.0), None, 200, 4).unwrap();
    eprintln!("levy {d:?}");
    assert!(d.z() <= 3.0);
}

#[test]
fn grid_and_kernel_simulators_agree() {
    let (trawl, levy) = poisson();
    let big_t: f64 = 1e2;
    let f_t = big_t.powf(2.0 / 3.0);
    let kern = simulate_finite_activity_yt(&[1.0], big_t, &trawl, &levy, f_t, 5_000, 5, "").unwrap();
    let grid = simulate_x_grid(
        &trawl,
        &levy,
        &[0.0],
        &[1.0],
        big_t,
        f_t,
        &XGridOptions::default(),
        5_000,
        6,
        "",
    )
    .unwrap();
    let a = kern.ensemble.marginal(1.0).unwrap();
    let b = grid.integrated.marginal(1.0).unwrap();
    let t = two_sample_ecf_test(&a, &b, None).unwrap();
    eprintln!("{t:?}");
    assert!(t.passes(0.01));
}
