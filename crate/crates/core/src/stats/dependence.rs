//! Dependence between increments over disjoint intervals.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_sample, ecf_point, log_grid, mad};
use crate::error::{validation, Error, Result};
use crate::pathsim::{path_rng, PathEnsemble};

/// `|ECF|` level the automatic `θ` aims at for each increment.
const AUTO_LEVEL: f64 = 0.606_530_659_712_633_4; // exp(-1/2)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    /// `|φ̂_joint(θ₁, θ₂) − φ̂₁(θ₁) φ̂₂(θ₂)|`
    pub d: f64,
    /// Bootstrap standard error of the complex difference.
    pub std_error: f64,
    pub theta: (f64, f64),
    pub n_samples: usize,
}

impl DependenceReport {
    pub fn z(&self) -> f64 {
        self.d / self.std_error
    }
}

fn difference(a: &[f64], b: &[f64], theta: (f64, f64)) -> Complex64 {
    let n = a.len() as f64;
    let mut joint = Complex64::new(0.0, 0.0);
    let mut pa = Complex64::new(0.0, 0.0);
    let mut pb = Complex64::new(0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (s1, c1) = (theta.0 * x).sin_cos();
        let (s2, c2) = (theta.1 * y).sin_cos();
        let (sj, cj) = (theta.0 * x + theta.1 * y).sin_cos();
        joint += Complex64::new(cj, sj);
        pa += Complex64::new(c1, s1);
        pb += Complex64::new(c2, s2);
    }
    joint / n - (pa / n) * (pb / n)
}

/// Smallest `θ > 0` with `|φ̂(θ)| = e^{-1/2}`, by a log-grid scan and bisection.
fn auto_theta(sample: &[f64]) -> Result<f64> {
    let scale = mad(sample);
    if !(scale > 0.0) {
        return Err(Error::Window {
            message: "increment sample is degenerate".into(),
            suggested: None,
        });
    }
    let grid = log_grid(1e-3 / scale, 1e3 / scale, 241);
    let m = |t: f64| ecf_point(sample, t).0.norm();
    let k = grid
        .iter()
        .position(|&t| m(t) <= AUTO_LEVEL)
        .ok_or_else(|| Error::Window {
            message: "|ECF| of the increment never falls to exp(-1/2)".into(),
            suggested: None,
        })?;
    if k == 0 {
        return Ok(grid[0]);
    }
    let (mut lo, mut hi) = (grid[k - 1], grid[k]);
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if m(mid) > AUTO_LEVEL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Dependence statistic for the increments over `first` and `second`.
///
/// With `theta = None` each `θ_i` is chosen so the increment's `|ECF|` is
/// `e^{-1/2}`. The standard error comes from `n_boot` path resamples drawn
/// from streams of `seed`.
pub fn increment_dependence(
    ensemble: &PathEnsemble,
    first: (f64, f64),
    second: (f64, f64),
    theta: Option<(f64, f64)>,
    n_boot: usize,
    seed: u64,
) -> Result<DependenceReport> {
    for (s, t) in [first, second] {
        if !(t > s) {
            return Err(validation(format!("interval ({s}, {t}) is empty")));
        }
    }
    if first.0 < second.1 && second.0 < first.1 {
        return Err(validation(format!("intervals {first:?} and {second:?} overlap")));
    }
    if n_boot < 2 {
        return Err(validation("need at least 2 bootstrap resamples"));
    }
    let a = ensemble.increments(first.0, first.1)?;
    let b = ensemble.increments(second.0, second.1)?;
    check_sample(&a)?;
    let theta = match theta {
        Some(t) => t,
        None => (auto_theta(&a)?, auto_theta(&b)?),
    };
    let d = difference(&a, &b, theta).norm();
    let n = a.len();
    let boots: Vec<Complex64> = (0..n_boot)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let ra: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
            let rb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
            difference(&ra, &rb, theta)
        })
        .collect();
    let mean = boots.iter().sum::<Complex64>() / n_boot as f64;
    let var = boots.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n_boot - 1) as f64;
    Ok(DependenceReport {
        d,
        std_error: var.sqrt(),
        theta,
        n_samples: n,
    })
}
