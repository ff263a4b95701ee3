//! LePage series for symmetric stable integrals of deterministic kernels.
//!
//! `∫ K dM_α` is represented as `σ Σ_j ε_j Γ_j^{-1/α} K(V_j) / p(V_j)^{1/α}` with
//! `V_j ~ p`. The terms beyond `n_terms` are replaced by a Gaussian vector with
//! the conditional covariance of the dropped tail.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::finite::KernelDomain;
use super::sampler::open_unit;
use super::{check_paths, run_paths, with_origin, EnsembleMeta, PathEnsemble, ProcessKind, Truncation};
use crate::error::{validation, Error, Result};
use crate::exponent::{kernel_moment, power_integral};
use crate::levy::k_beta_quadrature;
use crate::quad::{self, Tolerance};
use crate::trawl::{f_eval, TimeCombo, TrawlSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesBudget {
    pub n_terms: usize,
    /// Draws used to build the Gaussian remainder.
    #[serde(default = "default_draws")]
    pub compensation_draws: usize,
    /// Largest acceptable `error_bound`.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn default_draws() -> usize {
    64
}

impl Default for SeriesBudget {
    fn default() -> Self {
        Self {
            n_terms: 1000,
            compensation_draws: default_draws(),
            tolerance: None,
        }
    }
}

impl SeriesBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms == 0 {
            return Err(validation("budget.n_terms must be positive"));
        }
        if self.compensation_draws == 0 {
            return Err(validation("budget.compensation_draws must be positive"));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(validation("budget.tolerance must be positive"));
            }
        }
        Ok(())
    }

    /// Bound on `|E e^{iθS} - E e^{iθŜ}|` at `θ = 1` given `E k^4` of the scaled summand.
    pub fn error_bound(&self, alpha: f64, k4: f64) -> f64 {
        let n = self.n_terms as f64;
        let c2 = n.powf(1.0 - 2.0 / alpha) / (2.0 / alpha - 1.0);
        let c4 = n.powf(1.0 - 4.0 / alpha) / (4.0 / alpha - 1.0);
        c4 * k4 / 24.0 + c2 * c2 * k4 / (8.0 * self.compensation_draws as f64)
    }

    fn certify(&self, alpha: f64, k4: f64) -> Result<f64> {
        let bound = self.error_bound(alpha, k4);
        if let Some(tol) = self.tolerance {
            if bound > tol {
                return Err(Error::Accuracy {
                    achieved: bound,
                    requested: tol,
                    context: format!("LePage truncation with {} terms", self.n_terms),
                });
            }
        }
        Ok(bound)
    }
}

/// `σ = (α K_α)^{-1/α}`, making `σ Σ ε_j Γ_j^{-1/α}` standard symmetric α-stable.
pub fn lepage_sigma(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(validation(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    Ok((alpha * k_beta_quadrature(alpha)?).powf(-1.0 / alpha))
}

/// Adds `Σ_j ε_j Γ_j^{-1/α} k(V_j)` plus the Gaussian remainder to `row`, then scales.
fn series_path(
    rng: &mut ChaCha8Rng,
    row: &mut [f64],
    alpha: f64,
    budget: &SeriesBudget,
    scale: f64,
    scratch: &mut [f64],
    kernel: &dyn Fn(&mut ChaCha8Rng, &mut [f64]),
) {
    let inv = -1.0 / alpha;
    let mut gamma = 0.0;
    for _ in 0..budget.n_terms {
        gamma += -open_unit(rng).ln();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        kernel(rng, scratch);
        let w = sign * gamma.powf(inv);
        for (v, k) in row.iter_mut().zip(scratch.iter()) {
            *v += w * k;
        }
    }
    // remainder: points of a unit Poisson process on (Γ_n, ∞)
    let var = gamma.powf(1.0 - 2.0 / alpha) / (2.0 / alpha - 1.0);
    let w = (var / budget.compensation_draws as f64).sqrt();
    for _ in 0..budget.compensation_draws {
        let xi: f64 = StandardNormal.sample(rng);
        kernel(rng, scratch);
        for (v, k) in row.iter_mut().zip(scratch.iter()) {
            *v += w * xi * k;
        }
    }
    for v in row.iter_mut() {
        *v *= scale;
    }
}

fn run_series(
    n_paths: usize,
    n_times: usize,
    master_seed: u64,
    alpha: f64,
    budget: &SeriesBudget,
    scale: f64,
    kernel: &(dyn Fn(&mut ChaCha8Rng, &mut [f64]) + Sync),
) -> Vec<f64> {
    run_paths(n_paths, n_times, master_seed, |rng, row| {
        let mut scratch = vec![0.0; n_times];
        series_path(rng, row, alpha, budget, scale, &mut scratch, kernel);
    })
}

/// Stable `Y_T(t) = F_T^{-1} ∫∫ f(Tt, r, u) |g'(u)|^{1/α} M_α(dr du)` on the full support.
#[allow(clippy::too_many_arguments)]
pub fn simulate_stable_yt(
    times: &[f64],
    big_t: f64,
    trawl: &TrawlSpec,
    alpha: f64,
    f_t: f64,
    budget: &SeriesBudget,
    n_paths: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<PathEnsemble> {
    check_paths(n_paths)?;
    budget.validate()?;
    if !(big_t >= 1.0 && big_t.is_finite()) {
        return Err(validation(format!("T must be >= 1, got {big_t}")));
    }
    if !(f_t > 0.0 && f_t.is_finite()) {
        return Err(validation(format!("F_T must be positive, got {f_t}")));
    }
    let sigma = lepage_sigma(alpha)?;
    let times = with_origin(times)?;
    let t_max = *times.last().unwrap();
    let domain = KernelDomain::new(trawl, big_t * t_max)?;
    let m = domain.mass();
    let scale = sigma * m.powf(1.0 / alpha) / f_t;
    // E k^4 at t_max, where the kernel is largest
    let p4 = if t_max > 0.0 {
        power_integral(&TimeCombo::single(t_max)?, trawl, big_t, f_t, 4.0, 1e-9)?.value
    } else {
        0.0
    };
    let k4 = (sigma * m.powf(1.0 / alpha)).powi(4) * p4 / m;
    let bound = budget.certify(alpha, k4)?;
    let scaled: Vec<f64> = times.iter().map(|t| big_t * t).collect();
    let kernel = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
        let (r, u) = domain.sample(rng);
        for (o, &s) in out.iter_mut().zip(&scaled) {
            *o = f_eval(s, r, u);
        }
    };
    let values = run_series(n_paths, times.len(), master_seed, alpha, budget, scale, &kernel);
    PathEnsemble::new(
        times,
        values,
        EnsembleMeta {
            master_seed,
            config_hash: config_hash.to_string(),
            process_kind: ProcessKind::StableYt,
            truncation: Some(Truncation {
                n_terms: budget.n_terms,
                domain_u_cutoff: f64::INFINITY,
                error_bound: bound,
            }),
        },
    )
}

/// Importance density `p(r,u) = f(τ,r,u)^α u^{-2-γ} / J(α,γ,τ)` on the kernel support.
struct LimitDomain {
    alpha: f64,
    tau: f64,
    p_head: f64,
    head_exp: f64,
    gamma: f64,
}

impl LimitDomain {
    fn new(alpha: f64, gamma: f64, tau: f64) -> Self {
        Self {
            alpha,
            tau,
            // envelope masses τ^{α-γ}/(α-1-γ) on (0, τ] and τ^{α-γ}/γ on (τ, ∞)
            p_head: gamma / (alpha - 1.0),
            head_exp: 1.0 / (alpha - 1.0 - gamma),
            gamma,
        }
    }

    fn sample_u<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, t) = (self.alpha, self.tau);
        let c = (a - 1.0) / (a + 1.0);
        loop {
            if rng.random::<f64>() < self.p_head {
                let u = t * open_unit(rng).powf(self.head_exp);
                if rng.random::<f64>() < 1.0 - c * u / t {
                    return u;
                }
            } else {
                let u = t * open_unit(rng).powf(-1.0 / self.gamma);
                if rng.random::<f64>() < 1.0 - c * t / u {
                    return u;
                }
            }
        }
    }

    /// `(r, u)` from `p`: `u` from its marginal, then `r` proportional to `f(τ, r, u)^α`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let a = self.alpha;
        let u = self.sample_u(rng);
        let (lo, hi) = (u.min(self.tau), u.max(self.tau));
        let ramp = lo.powf(a + 1.0) / (a + 1.0);
        let flat = (hi - lo) * lo.powf(a);
        let pick = rng.random::<f64>() * (2.0 * ramp + flat);
        let s = lo * open_unit(rng).powf(1.0 / (a + 1.0));
        let r = if pick < ramp {
            s
        } else if pick < ramp + flat {
            lo + (hi - lo) * rng.random::<f64>()
        } else {
            hi + lo - s
        };
        (r, u)
    }
}

/// The limit process `Y(t) = ∫∫ f(t,r,u) u^{-(2+γ)/α} M_α(dr du)`, `α > 1 + γ`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_limit_y(
    times: &[f64],
    alpha: f64,
    gamma: f64,
    budget: &SeriesBudget,
    n_paths: usize,
    master_seed: u64,
    config_hash: &str,
) -> Result<PathEnsemble> {
    check_paths(n_paths)?;
    budget.validate()?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(validation(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(alpha > 1.0 + gamma && alpha < 2.0) {
        return Err(Error::Regime(format!(
            "the limit process needs 1 + gamma < alpha < 2, got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    let sigma = lepage_sigma(alpha)?;
    let times = with_origin(times)?;
    let tau = *times.last().unwrap();
    if tau == 0.0 {
        return Err(validation("time grid must extend beyond 0"));
    }
    let j = kernel_moment(alpha, gamma, tau, 1e-10)?;
    let scale = sigma * j.powf(1.0 / alpha);
    // the summand f(t)/f(τ) lies in [0, 1]
    let bound = budget.certify(alpha, scale.powi(4))?;
    let domain = LimitDomain::new(alpha, gamma, tau);
    let kernel = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
        let (r, u) = domain.sample(rng);
        let top = f_eval(tau, r, u);
        for (o, &t) in out.iter_mut().zip(&times) {
            *o = if top > 0.0 {
                (f_eval(t, r, u) / top).min(1.0)
            } else {
                0.0
            };
        }
    };
    let values = run_series(n_paths, times.len(), master_seed, alpha, budget, scale, &kernel);
    PathEnsemble::new(
        times.clone(),
        values,
        EnsembleMeta {
            master_seed,
            config_hash: config_hash.to_string(),
            process_kind: ProcessKind::LimitY,
            truncation: Some(Truncation {
                n_terms: budget.n_terms,
                domain_u_cutoff: f64::INFINITY,
                error_bound: bound,
            }),
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaCalibration {
    pub alpha: f64,
    /// `(α K_α)^{-1/α}` by quadrature of `K_α`.
    pub sigma_quadrature: f64,
    /// `(∫_0^∞ x^{-α} sin x dx)^{-1/α}` by oscillatory quadrature.
    pub sigma_sine_integral: f64,
    /// From the ECF at `θ = 1` of an unscaled series with kernel `≡ 1`.
    pub sigma_monte_carlo: f64,
    pub monte_carlo_se: f64,
    pub n_terms: usize,
    pub n_paths: usize,
}

fn sine_integral(alpha: f64) -> Result<f64> {
    let tol = Tolerance { abs: 1e-14, rel: 1e-12 };
    let mut partials = Vec::new();
    let mut total = 0.0;
    let pi = std::f64::consts::PI;
    for k in 0..400 {
        let (a, b) = (k as f64 * pi, (k + 1) as f64 * pi);
        let est = if k == 0 {
            quad::adaptive(
                |x| if x == 0.0 { 0.0 } else { x.powf(-alpha) * x.sin() },
                &[0.0, 1e-8, 1e-4, 1e-2, 1.0, b],
                tol,
                4000,
            )
        } else {
            quad::adaptive(|x| x.powf(-alpha) * x.sin(), &[a, b], tol, 200)
        };
        total += est.value;
        partials.push(total);
    }
    let tail = &partials[partials.len() - 20..];
    let v = quad::wynn_epsilon(tail);
    if !v.is_finite() {
        return Err(Error::Accuracy {
            achieved: f64::NAN,
            requested: 1e-10,
            context: "sine integral".into(),
        });
    }
    Ok(v)
}

/// Cross-checks the series normalization three ways.
pub fn calibrate_sigma(alpha: f64, n_terms: usize, n_paths: usize, master_seed: u64) -> Result<SigmaCalibration> {
    let sigma_quadrature = lepage_sigma(alpha)?;
    let sigma_sine_integral = sine_integral(alpha)?.powf(-1.0 / alpha);
    let budget = SeriesBudget {
        n_terms,
        ..SeriesBudget::default()
    };
    let kernel = |_: &mut ChaCha8Rng, out: &mut [f64]| out[0] = 1.0;
    let values = run_series(n_paths, 1, master_seed, alpha, &budget, 1.0, &kernel);
    let n = values.len() as f64;
    let (mut c, mut c2) = (0.0, 0.0);
    for v in &values {
        let x = v.cos();
        c += x;
        c2 += x * x;
    }
    let mean = c / n;
    let se = ((c2 / n - mean * mean).max(0.0) / n).sqrt();
    // -ln φ(1) = σ^{-α}
    let sigma_monte_carlo = (-mean.ln()).powf(-1.0 / alpha);
    // delta method: dσ/dφ = σ / (α φ (-ln φ))
    let monte_carlo_se = sigma_monte_carlo * se / (alpha * mean * (-mean.ln()));
    Ok(SigmaCalibration {
        alpha,
        sigma_quadrature,
        sigma_sine_integral,
        sigma_monte_carlo,
        monte_carlo_se,
        n_terms,
        n_paths,
    })
}
