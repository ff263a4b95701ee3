//! Monte Carlo engines for integrated trawl processes, their limits and the
//! raw trawl process.

mod finite;
mod io;
mod lepage;
mod levy_process;
pub mod sampler;
mod xgrid;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

pub use finite::{domain_mass, simulate_finite_activity_yt, FiniteActivityRun};
pub use io::{read_ensemble, write_ensemble, EnsembleFormat, BINARY_MAGIC};
pub use lepage::{calibrate_sigma, lepage_sigma, simulate_limit_y, simulate_stable_yt, SeriesBudget, SigmaCalibration};
pub use levy_process::{sample_symmetric_stable, simulate_stable_levy};
pub use xgrid::{simulate_x_grid, XGridOptions, XGridRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    FiniteActivityYt,
    StableYt,
    LimitY,
    TrawlX,
    IntegratedX,
    StableLevy,
    /// Read back from a file that does not record the kind.
    Unknown,
}

impl ProcessKind {
    /// Whether every path must start at 0 at time 0.
    pub fn starts_at_zero(&self) -> bool {
        !matches!(self, ProcessKind::TrawlX | ProcessKind::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_terms: usize,
    /// Largest `u` of the sampled domain; infinite when the full support is used.
    pub domain_u_cutoff: f64,
    /// Bound on the characteristic-function perturbation at `θ = 1`.
    pub error_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub master_seed: u64,
    pub config_hash: String,
    pub process_kind: ProcessKind,
    pub truncation: Option<Truncation>,
}

/// Sample paths on a common time grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    times: Vec<f64>,
    values: Vec<f64>,
    pub meta: EnsembleMeta,
}

impl PathEnsemble {
    pub fn new(times: Vec<f64>, values: Vec<f64>, meta: EnsembleMeta) -> Result<Self> {
        check_times(&times)?;
        if times.is_empty() || values.len() % times.len() != 0 {
            return Err(validation("path values do not fill whole rows of the time grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(validation("ensemble contains non-finite values"));
        }
        let e = Self { times, values, meta };
        if e.meta.process_kind.starts_at_zero() && e.times[0] == 0.0 && e.paths().any(|p| p[0] != 0.0) {
            return Err(validation("a path does not start at 0"));
        }
        Ok(e)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_paths(&self) -> usize {
        self.values.len() / self.times.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_times())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the grid time equal to `t` (to 1e-12 relative).
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| validation(format!("time {t} is not on the ensemble grid")))
    }

    /// Values of every path at grid time `t`.
    pub fn marginal(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.time_index(t)?;
        Ok(self.paths().map(|p| p[k]).collect())
    }

    /// `Y(t) - Y(s)` for every path.
    pub fn increments(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        let (i, j) = (self.time_index(s)?, self.time_index(t)?);
        Ok(self.paths().map(|p| p[j] - p[i]).collect())
    }
}

/// Validates a time grid: finite, nonnegative, strictly increasing.
pub fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(validation("time grid is empty"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(validation("time grid must contain finite nonnegative values"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(validation("time grid must be strictly increasing"));
    }
    Ok(())
}

/// The grid with `0` prepended when missing.
pub fn with_origin(times: &[f64]) -> Result<Vec<f64>> {
    check_times(times)?;
    let mut out = Vec::with_capacity(times.len() + 1);
    if times[0] != 0.0 {
        out.push(0.0);
    }
    out.extend_from_slice(times);
    Ok(out)
}

/// The random stream of path `index`: ChaCha8 keyed by the master seed, with
/// the path index as stream selector.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs `fill(rng, row)` for every path in parallel; rows are assembled in
/// path order so the result does not depend on scheduling.
pub(crate) fn run_paths<F>(n_paths: usize, n_times: usize, master_seed: u64, fill: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let mut values = vec![0.0; n_paths * n_times];
    values.par_chunks_mut(n_times.max(1)).enumerate().for_each(|(i, row)| {
        let mut rng = path_rng(master_seed, i as u64);
        fill(&mut rng, row);
    });
    values
}

pub(crate) fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(validation("n_paths must be positive"));
    }
    Ok(())
}
