//! Two-sample comparison of empirical characteristic functions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{adaptive_window, check_sample, log_grid};
use crate::error::{validation, Result};

const DEFAULT_THETAS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    pub theta_grid: Vec<f64>,
    /// Mahalanobis distance between the stacked `(cos, sin)` means.
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl TwoSampleTest {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Mean vector and covariance of the mean of `(cos θ_k x, sin θ_k x)`.
fn moments(sample: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = 2 * theta.len();
    let n = sample.len() as f64;
    let mut mean = vec![0.0; d];
    let mut cross = vec![vec![0.0; d]; d];
    let mut z = vec![0.0; d];
    for &x in sample {
        for (k, &t) in theta.iter().enumerate() {
            let (s, c) = (t * x).sin_cos();
            z[2 * k] = c;
            z[2 * k + 1] = s;
        }
        for i in 0..d {
            mean[i] += z[i];
            for j in 0..=i {
                cross[i][j] += z[i] * z[j];
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let c = (cross[i][j] - n * mean[i] * mean[j]) / (n - 1.0) / n;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    (mean, cov)
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` when `a` is not positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// `xᵀ a⁻¹ x` by forward substitution on the Cholesky factor.
fn mahalanobis(a: &[Vec<f64>], x: &[f64]) -> Option<f64> {
    let l = cholesky(a)?;
    let mut y = vec![0.0; x.len()];
    for i in 0..x.len() {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (x[i] - s) / l[i][i];
    }
    Some(y.iter().map(|v| v * v).sum())
}

/// Tests whether two samples share a law by comparing their ECFs on
/// `theta_grid`; the statistic is asymptotically `χ²` with `2k` degrees of freedom.
/// `None` places four points across the adaptive window of the pooled sample.
pub fn two_sample_ecf_test(a: &[f64], b: &[f64], theta_grid: Option<&[f64]>) -> Result<TwoSampleTest> {
    check_sample(a)?;
    check_sample(b)?;
    let theta = match theta_grid {
        Some(t) => t.to_vec(),
        None => {
            let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
            let (lo, hi) = adaptive_window(&pooled)?;
            log_grid(lo, hi, DEFAULT_THETAS)
        }
    };
    if theta.is_empty() || theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(validation("theta grid must be nonempty and positive"));
    }
    let (ma, ca) = moments(a, &theta);
    let (mb, cb) = moments(b, &theta);
    let diff: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    let cov: Vec<Vec<f64>> = ca
        .iter()
        .zip(&cb)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect();
    let statistic =
        mahalanobis(&cov, &diff).ok_or_else(|| validation("ECF covariance is singular on this theta grid"))?;
    let dof = diff.len();
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    Ok(TwoSampleTest {
        theta_grid: theta,
        statistic,
        dof,
        p_value: chi.sf(statistic),
    })
}
