//! Exact simulation of `Y_T` for finite-activity bases in kernel coordinates.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::sampler::{MarkSampler, TrawlSampler};
use super::{check_paths, run_paths, with_origin, EnsembleMeta, PathEnsemble, ProcessKind};
use crate::error::{validation, Result};
use crate::levy::LevyExponent;
use crate::trawl::{f_eval, TrawlSpec};

/// `M = ∫∫_{0<r<T t_max + u} |g'(u)| dr du = T t_max g(0) + ∫ g`.
pub fn domain_mass(trawl: &TrawlSpec, big_t: f64, t_max: f64) -> Result<f64> {
    Ok(big_t * t_max * trawl.g0() + trawl.measure()?)
}

/// Samples `(r, u)` with density `|g'(u)| / M` on `{0 < r < span + u}`.
///
/// In `(r, y = g(u))` coordinates the region is a `span × g(0)` rectangle
/// followed by the hypograph of `g` shifted by `span`.
#[derive(Debug, Clone)]
pub(crate) struct KernelDomain {
    sampler: TrawlSampler,
    span: f64,
    p_rect: f64,
    mass: f64,
}

impl KernelDomain {
    pub(crate) fn new(trawl: &TrawlSpec, span: f64) -> Result<Self> {
        let sampler = TrawlSampler::new(trawl)?;
        let rect = span * sampler.g0();
        let mass = rect + sampler.measure();
        Ok(Self {
            p_rect: rect / mass,
            sampler,
            span,
            mass,
        })
    }

    pub(crate) fn mass(&self) -> f64 {
        self.mass
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        if rng.random::<f64>() < self.p_rect {
            let r = self.span * rng.random::<f64>();
            (r, self.sampler.lifetime(rng))
        } else {
            let (x, u) = self.sampler.hypograph(0.0, rng);
            (self.span + x, u)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FiniteActivityRun {
    pub ensemble: PathEnsemble,
    /// `ν(ℝ) M`, the expected number of points per path.
    pub expected_points: f64,
}

/// `Y_T(t) = F_T^{-1} Σ_i η_i f(T t, r_i, u_i)` with Poisson points in kernel coordinates.
#[allow(clippy::too_many_arguments)]
pub fn simulate_finite_activity_yt(
    times: &[f64],
    big_t: f64,
    trawl: &TrawlSpec,
    levy: &LevyExponent,
    f_t: f64,
    n_paths: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<FiniteActivityRun> {
    check_paths(n_paths)?;
    if !(big_t >= 1.0 && big_t.is_finite()) {
        return Err(validation(format!("T must be >= 1, got {big_t}")));
    }
    if !(f_t > 0.0 && f_t.is_finite()) {
        return Err(validation(format!("F_T must be positive, got {f_t}")));
    }
    let times = with_origin(times)?;
    let marks = MarkSampler::new(levy)?;
    let t_max = *times.last().unwrap();
    let domain = KernelDomain::new(trawl, big_t * t_max)?;
    let intensity = marks.mass() * domain.mass();
    let scaled: Vec<f64> = times.iter().map(|t| big_t * t).collect();
    let poisson = if intensity > 0.0 {
        Some(Poisson::new(intensity).map_err(|e| validation(format!("Poisson intensity: {e}")))?)
    } else {
        None
    };
    let values = run_paths(n_paths, times.len(), master_seed, |rng, row| {
        let Some(poisson) = &poisson else { return };
        let n = poisson.sample(rng) as u64;
        for _ in 0..n {
            let (r, u) = domain.sample(rng);
            let eta = marks.sample(rng) / f_t;
            for (v, &s) in row.iter_mut().zip(&scaled) {
                *v += eta * f_eval(s, r, u);
            }
        }
    });
    let ensemble = PathEnsemble::new(
        times,
        values,
        EnsembleMeta {
            master_seed,
            config_hash: config_hash.to_string(),
            process_kind: ProcessKind::FiniteActivityYt,
            truncation: None,
        },
    )?;
    Ok(FiniteActivityRun {
        ensemble,
        expected_points: intensity,
    })
}
