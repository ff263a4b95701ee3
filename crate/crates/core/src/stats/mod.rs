//! Empirical characteristic functions and the estimators built on them.

mod dependence;
mod selfsim;
mod twosample;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::pathsim::path_rng;

pub use dependence::{increment_dependence, DependenceReport};
pub use selfsim::{selfsim_index_fit, SELFSIM_S_STEP};
pub use twosample::{two_sample_ecf_test, TwoSampleTest};

pub const MIN_SAMPLES: usize = 100;
/// Target band of `|ECF|` for the adaptive window.
pub const WINDOW_BAND: (f64, f64) = (0.2, 0.8);
pub const DEFAULT_BOOTSTRAP: usize = 200;
const FIT_POINTS: usize = 24;
const SCAN_POINTS: usize = 241;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcfCurve {
    pub theta_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
}

impl EcfCurve {
    pub fn moduli(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Largest `|ECF(θ_k) - target(θ_k)| / SE_k` over the grid; a zero SE
    /// counts as a match only when the difference is zero too.
    pub fn max_z<F: Fn(f64) -> Complex64>(&self, target: F) -> f64 {
        self.theta_grid
            .iter()
            .zip(&self.values)
            .zip(&self.std_errors)
            .map(|((&t, &v), &se)| {
                let d = (v - target(t)).norm();
                if se > 0.0 {
                    d / se
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(validation("empty sample"));
    }
    if sample.len() < MIN_SAMPLES {
        return Err(validation(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(validation("sample contains non-finite values"));
    }
    Ok(())
}

/// Mean of `exp(iθx)` and the standard error of that complex mean.
pub(crate) fn ecf_point(sample: &[f64], theta: f64) -> (Complex64, f64) {
    let n = sample.len() as f64;
    let (mut sc, mut ss, mut scc, mut sss) = (0.0, 0.0, 0.0, 0.0);
    for &x in sample {
        let (s, c) = (theta * x).sin_cos();
        sc += c;
        ss += s;
        scc += c * c;
        sss += s * s;
    }
    let (mc, ms) = (sc / n, ss / n);
    let var = if sample.len() > 1 {
        ((scc - n * mc * mc).max(0.0) + (sss - n * ms * ms).max(0.0)) / (n - 1.0)
    } else {
        0.0
    };
    (Complex64::new(mc, ms), (var / n).sqrt())
}

pub fn ecf(sample: &[f64], theta_grid: &[f64]) -> Result<EcfCurve> {
    check_sample(sample)?;
    if theta_grid.iter().any(|t| !t.is_finite()) {
        return Err(validation("theta grid must be finite"));
    }
    let points: Vec<(Complex64, f64)> = theta_grid.par_iter().map(|&t| ecf_point(sample, t)).collect();
    Ok(EcfCurve {
        theta_grid: theta_grid.to_vec(),
        values: points.iter().map(|p| p.0).collect(),
        std_errors: points.iter().map(|p| p.1).collect(),
        n_samples: sample.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexFit {
    pub index_hat: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theta_window: (f64, f64),
    pub n_points: usize,
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r²)`.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

/// Slope of `log(-log|φ(θ)|)` against `log θ` for a given curve of moduli.
pub fn index_fit_from_curve(theta: &[f64], modulus: &[f64]) -> Result<IndexFit> {
    if theta.len() != modulus.len() || theta.len() < 4 {
        return Err(validation("index fit needs at least 4 (theta, |ECF|) pairs"));
    }
    if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(validation("theta must be positive"));
    }
    if let Some(m) = modulus.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
        return Err(Error::Window {
            message: format!("|ECF| = {m} is not strictly inside (0, 1)"),
            suggested: None,
        });
    }
    let x: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = modulus.iter().map(|m| (-m.ln()).ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&x, &y);
    Ok(IndexFit {
        index_hat: slope,
        intercept,
        r_squared,
        theta_window: (theta[0], theta[theta.len() - 1]),
        n_points: theta.len(),
    })
}

pub(crate) fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about the median.
pub fn mad(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    let m = median(&mut v);
    let mut d: Vec<f64> = sample.iter().map(|x| (x - m).abs()).collect();
    median(&mut d)
}

/// The `θ` range on which `|ECF|` first falls from 0.8 to 0.2, found on a
/// log grid scaled by the sample's MAD.
pub fn adaptive_window(sample: &[f64]) -> Result<(f64, f64)> {
    check_sample(sample)?;
    let scale = mad(sample);
    if !(scale > 0.0) {
        return Err(Error::Window {
            message: "sample is (nearly) degenerate: |ECF| stays at 1".into(),
            suggested: None,
        });
    }
    let grid = log_grid(1e-3 / scale, 1e3 / scale, SCAN_POINTS);
    let moduli: Vec<f64> = grid.par_iter().map(|&t| ecf_point(sample, t).0.norm()).collect();
    let (lo_band, hi_band) = WINDOW_BAND;
    let start = moduli.iter().position(|&m| m <= hi_band).ok_or_else(|| Error::Window {
        message: format!("|ECF| never drops below {hi_band}"),
        suggested: None,
    })?;
    let end = moduli[start..]
        .iter()
        .position(|&m| m < lo_band)
        .map(|k| start + k)
        .unwrap_or(moduli.len());
    if end <= start + 1 {
        let suggested = Some((grid[start.saturating_sub(1)], grid[(start + 1).min(grid.len() - 1)]));
        return Err(Error::Window {
            message: "|ECF| drops through the band [0.2, 0.8] too fast to fit".into(),
            suggested,
        });
    }
    Ok((grid[start], grid[end - 1]))
}

fn fit_on(sample: &[f64], window: (f64, f64)) -> Result<IndexFit> {
    let theta = log_grid(window.0, window.1, FIT_POINTS);
    let moduli: Vec<f64> = theta.par_iter().map(|&t| ecf_point(sample, t).0.norm()).collect();
    index_fit_from_curve(&theta, &moduli)
}

/// Stability index from the slope of `log(-log|ECF|)`. `None` selects the
/// adaptive window; an explicit window must keep `|ECF|` away from 0 and 1.
pub fn stability_index_fit(sample: &[f64], theta_window: Option<(f64, f64)>) -> Result<IndexFit> {
    check_sample(sample)?;
    let window = match theta_window {
        None => adaptive_window(sample)?,
        Some((lo, hi)) => {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(validation(format!(
                    "theta window ({lo}, {hi}) must satisfy 0 < lo < hi"
                )));
            }
            let n = sample.len() as f64;
            let floor = (3.0 / n.sqrt()).max(0.01);
            for t in log_grid(lo, hi, FIT_POINTS) {
                let m = ecf_point(sample, t).0.norm();
                if m > 0.99 || m < floor {
                    return Err(Error::Window {
                        message: format!("|ECF({t:.4e})| = {m:.4} is ill-conditioned for the log(-log) transform"),
                        suggested: adaptive_window(sample).ok(),
                    });
                }
            }
            (lo, hi)
        }
    };
    fit_on(sample, window)
}

/// Percentile interval of a statistic over `n_boot` resamples of `0..n`.
/// Resample `b` draws from stream `b` of `seed`; failed resamples are dropped.
pub fn bootstrap_percentile<F>(n: usize, n_boot: usize, seed: u64, level: f64, stat: F) -> Result<(f64, f64)>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    let mut values: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = path_rng(seed, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&idx).ok()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .filter(|v| v.is_finite())
        .collect();
    if values.len() < n_boot.div_ceil(2).max(2) {
        return Err(validation(format!(
            "only {} of {n_boot} bootstrap resamples succeeded",
            values.len()
        )));
    }
    values.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (values.len() - 1) as f64;
        let (i, f) = (h.floor() as usize, h.fract());
        values[i] + f * (values[(i + 1).min(values.len() - 1)] - values[i])
    };
    let a = 0.5 * (1.0 - level);
    Ok((q(a), q(1.0 - a)))
}

/// 95% bootstrap interval for the stability index, refitting on the window of `fit`.
pub fn stability_index_ci(sample: &[f64], fit: &IndexFit, n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    bootstrap_percentile(sample.len(), n_boot, seed, 0.95, |idx| {
        let resample: Vec<f64> = idx.iter().map(|&i| sample[i]).collect();
        fit_on(&resample, fit.theta_window).map(|f| f.index_hat)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::sample_symmetric_stable;
    use proptest::prelude::*;

    fn stable_draws(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = path_rng(seed, 0);
        (0..n).map(|_| sample_symmetric_stable(alpha, &mut rng)).collect()
    }

    #[test]
    fn ecf_trivial_cases() {
        let zeros = vec![0.0; 200];
        let c = ecf(&zeros, &[0.0, 1.0, 5.0]).unwrap();
        assert!(c.values.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        assert!(ecf(&[], &[1.0]).is_err());
        assert!(ecf(&[1.0; 10], &[1.0]).is_err());
        let x = stable_draws(1.5, 2000, 3);
        let sym: Vec<f64> = x.iter().flat_map(|v| [*v, -*v]).collect();
        let c = ecf(&sym, &[0.3, 1.0, 2.0]).unwrap();
        for (v, se) in c.values.iter().zip(&c.std_errors) {
            assert!(v.im.abs() <= 3.0 * se.max(1e-15));
        }
        let c = ecf(&x, &[0.0, 0.7]).unwrap();
        assert_eq!(c.values[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn ecf_matches_stable_generator() {
        let x = stable_draws(1.5, 100_000, 11);
        let c = ecf(&x, &[0.5, 1.0, 2.0]).unwrap();
        let z = c.max_z(|t| Complex64::new((-t.abs().powf(1.5)).exp(), 0.0));
        assert!(z <= 3.0, "max z {z}");
    }

    #[test]
    fn noiseless_curve_gives_exact_slope() {
        let theta = log_grid(0.3, 1.5, 20);
        let m: Vec<f64> = theta.iter().map(|t| (-t.powf(1.5)).exp()).collect();
        let fit = index_fit_from_curve(&theta, &m).unwrap();
        assert!((fit.index_hat - 1.5).abs() < 1e-10);
        assert!(fit.intercept.abs() < 1e-10);
        assert!(index_fit_from_curve(&theta[..3], &m[..3]).is_err());
    }

    #[test]
    fn stable_index_recovered() {
        let x = stable_draws(1.5, 100_000, 5);
        let fit = stability_index_fit(&x, None).unwrap();
        assert!((1.45..=1.55).contains(&fit.index_hat), "{fit:?}");
        assert!(fit.n_points >= 4);
        let (lo, hi) = stability_index_ci(&x, &fit, 50, 1).unwrap();
        assert!(lo <= fit.index_hat && fit.index_hat <= hi);
    }

    #[test]
    fn ill_conditioned_windows_rejected() {
        let x = stable_draws(1.5, 10_000, 2);
        let err = stability_index_fit(&x, Some((1e-5, 1e-4))).unwrap_err();
        match err {
            Error::Window { suggested, .. } => assert!(suggested.is_some()),
            other => panic!("{other}"),
        }
        assert!(matches!(
            stability_index_fit(&x, Some((50.0, 100.0))),
            Err(Error::Window { .. })
        ));
        assert!(matches!(
            stability_index_fit(&vec![1.0; 500], None),
            Err(Error::Window { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn ecf_in_unit_disk(xs in proptest::collection::vec(-1e3..1e3f64, 100..300), t in -10.0..10.0f64) {
            let c = ecf(&xs, &[0.0, t]).unwrap();
            prop_assert_eq!(c.values[0], Complex64::new(1.0, 0.0));
            prop_assert!(c.values[1].norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn index_fit_scale_free(c in 0.01..100.0f64, seed in 0..1000u64) {
            let x = stable_draws(1.3, 2000, seed);
            let y: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = stability_index_fit(&x, None).unwrap();
            let b = stability_index_fit(&y, None).unwrap();
            prop_assert!((a.index_hat - b.index_hat).abs() < 1e-8, "{} vs {}", a.index_hat, b.index_hat);
            prop_assert!((a.theta_window.0 / c - b.theta_window.0).abs() < 1e-8 * a.theta_window.0 / c);
        }
    }
}
