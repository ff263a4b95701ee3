//! Symmetric stable variates and stable Lévy processes.

use rand::Rng;
use std::f64::consts::FRAC_PI_2;

use super::sampler::open_unit;
use super::{check_paths, run_paths, with_origin, EnsembleMeta, PathEnsemble, ProcessKind};
use crate::error::{validation, Result};

/// Chambers-Mallows-Stuck draw with characteristic function `exp(-|θ|^α)`.
pub fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = FRAC_PI_2 * (2.0 * rng.random::<f64>() - 1.0);
    let w = -open_unit(rng).ln();
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// `L(t)` with independent increments `L(t) - L(s) ~ (t - s)^{1/α} S_α`.
pub fn simulate_stable_levy(
    times: &[f64],
    alpha: f64,
    n_paths: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<PathEnsemble> {
    check_paths(n_paths)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(validation(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    let times = with_origin(times)?;
    let values = run_paths(n_paths, times.len(), master_seed, |rng, row| {
        for k in 1..row.len() {
            let dt = times[k] - times[k - 1];
            row[k] = row[k - 1] + dt.powf(1.0 / alpha) * sample_symmetric_stable(alpha, rng);
        }
    });
    PathEnsemble::new(
        times,
        values,
        EnsembleMeta {
            master_seed,
            config_hash: config_hash.to_string(),
            process_kind: ProcessKind::StableLevy,
            truncation: None,
        },
    )
}
