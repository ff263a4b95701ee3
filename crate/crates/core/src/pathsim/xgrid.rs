//! Direct simulation of the trawl process `X_t = Λ(A + (t, 0))` in the `(x, y)` plane.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::sampler::{MarkSampler, TrawlSampler};
use super::{check_paths, check_times, path_rng, with_origin, EnsembleMeta, PathEnsemble, ProcessKind};
use crate::error::{validation, Error, Result};
use crate::levy::LevyExponent;
use crate::trawl::TrawlSpec;

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XGridOptions {
    /// Points are placed uniformly on `[-window, t_end]`.
    pub window: f64,
    /// Sample the points born before `-window` that are still alive at time 0
    /// from the hypograph of `g`; when false they are dropped.
    #[serde(default = "yes")]
    pub exact_past: bool,
    /// Largest tolerated expected number of dropped points, `ν(ℝ) ∫_window^∞ g`.
    #[serde(default = "default_bias")]
    pub bias_threshold: f64,
}

fn yes() -> bool {
    true
}

fn default_bias() -> f64 {
    1e-3
}

impl Default for XGridOptions {
    fn default() -> Self {
        Self {
            window: 10.0,
            exact_past: true,
            bias_threshold: default_bias(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct XGridRun {
    /// `X_t` on the raw time grid.
    pub x: PathEnsemble,
    /// `F_T^{-1} ∫_0^{Tt} X_s ds` on the `Y`-scale grid.
    pub integrated: PathEnsemble,
}

/// Simulates `X` at raw times `x_times` and the time integral of the same
/// realisation at `T t` for `t` in `y_times`.
///
/// Each point is an interval `[x_i, x_i + g⁻¹(y_i)]` carrying mark `η_i`, so the
/// integral is computed exactly from interval overlaps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_x_grid(
    trawl: &TrawlSpec,
    levy: &LevyExponent,
    x_times: &[f64],
    y_times: &[f64],
    big_t: f64,
    f_t: f64,
    options: &XGridOptions,
    n_paths: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<XGridRun> {
    check_paths(n_paths)?;
    check_times(x_times)?;
    let y_times = with_origin(y_times)?;
    if !(options.window >= 0.0 && options.window.is_finite()) {
        return Err(validation("window must be finite and nonnegative"));
    }
    if !(big_t >= 1.0 && f_t > 0.0) {
        return Err(validation("need T >= 1 and F_T > 0"));
    }
    let marks = MarkSampler::new(levy)?;
    let sampler = TrawlSampler::new(trawl)?;
    let nu = marks.mass();
    let past_mass = sampler.tail_mass(options.window);
    if !options.exact_past && nu * past_mass > options.bias_threshold {
        // ν ∫_w^∞ g = threshold, using the tail law ∫_w^∞ g ≈ C_g w^{-γ} / (γ(1+γ))
        let gamma = trawl.gamma();
        let c = trawl.c_g() / (gamma * (1.0 + gamma));
        let suggested = (nu * c / options.bias_threshold).powf(1.0 / gamma);
        return Err(Error::Window {
            message: format!(
                "window {} drops {:.3e} expected points alive at time 0 (threshold {:.1e})",
                options.window,
                nu * past_mass,
                options.bias_threshold
            ),
            suggested: Some((suggested, f64::INFINITY)),
        });
    }
    let t_end = x_times.last().unwrap().max(big_t * y_times.last().unwrap());
    let span = options.window + t_end;
    let g0 = sampler.g0();
    let recent = Poisson::new(nu * span * g0).ok();
    let past = if options.exact_past {
        Poisson::new(nu * past_mass).ok()
    } else {
        None
    };
    let ends: Vec<f64> = y_times.iter().map(|t| big_t * t).collect();
    let (nx, ny) = (x_times.len(), y_times.len());

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            let mut xr = vec![0.0; nx];
            let mut yr = vec![0.0; ny];
            let mut add = |start: f64, life: f64, eta: f64| {
                let stop = start + life;
                for (v, &t) in xr.iter_mut().zip(x_times) {
                    if start <= t && t <= stop {
                        *v += eta;
                    }
                }
                for (v, &e) in yr.iter_mut().zip(&ends) {
                    let overlap = stop.min(e) - start.max(0.0);
                    if overlap > 0.0 {
                        *v += eta * overlap;
                    }
                }
            };
            if let Some(p) = &recent {
                let n = p.sample(&mut rng) as u64;
                for _ in 0..n {
                    let start = -options.window + span * rng.random::<f64>();
                    let life = sampler.lifetime(&mut rng);
                    let eta = marks.sample(&mut rng);
                    add(start, life, eta);
                }
            }
            if let Some(p) = &past {
                let n = p.sample(&mut rng) as u64;
                for _ in 0..n {
                    // born at -x < -window and alive past time 0
                    let (x, life) = sampler.hypograph(options.window, &mut rng);
                    let eta = marks.sample(&mut rng);
                    add(-x, life, eta);
                }
            }
            for v in yr.iter_mut() {
                *v /= f_t;
            }
            (xr, yr)
        })
        .collect();

    let meta = |kind| EnsembleMeta {
        master_seed,
        config_hash: config_hash.to_string(),
        process_kind: kind,
        truncation: None,
    };
    let x = PathEnsemble::new(
        x_times.to_vec(),
        rows.iter().flat_map(|r| r.0.iter().copied()).collect(),
        meta(ProcessKind::TrawlX),
    )?;
    let integrated = PathEnsemble::new(
        y_times,
        rows.iter().flat_map(|r| r.1.iter().copied()).collect(),
        meta(ProcessKind::IntegratedX),
    )?;
    Ok(XGridRun { x, integrated })
}
