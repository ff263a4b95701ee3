//! Trawl geometry and the deterministic kernels `f`, `h_T` and `a`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::quad::{self, Tolerance};

/// `f(t, r, u) = min(r, t) - min((r - u)_+, t)`.
#[inline]
pub fn f_eval(t: f64, r: f64, u: f64) -> f64 {
    r.min(t) - (r - u).max(0.0).min(t)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied trawl function together with its derivative and inverse.
#[derive(Clone)]
pub struct CustomTrawl {
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    pub g_inv: ScalarFn,
    /// Declared limit of `x^{2+gamma} |g'(x)|`.
    pub c_g: f64,
}

impl fmt::Debug for CustomTrawl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTrawl")
            .field("c_g", &self.c_g)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum TrawlFamily {
    /// `g(x) = C (1 + x)^{-1-gamma}`
    Canonical,
    Custom(CustomTrawl),
}

#[derive(Debug, Clone)]
pub struct TrawlSpec {
    gamma: f64,
    c: f64,
    family: TrawlFamily,
}

impl TrawlSpec {
    pub fn canonical(c: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(validation(format!("trawl scale C must be positive, got {c}")));
        }
        Ok(Self {
            gamma,
            c,
            family: TrawlFamily::Canonical,
        })
    }

    /// Builds a custom trawl and checks `g`, `g'` and `g^{-1}` against each other.
    pub fn custom(gamma: f64, custom: CustomTrawl) -> Result<Self> {
        check_gamma(gamma)?;
        let g0 = (custom.g)(0.0);
        let spec = Self {
            gamma,
            c: g0,
            family: TrawlFamily::Custom(custom),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn scale(&self) -> f64 {
        self.c
    }

    pub fn family(&self) -> &TrawlFamily {
        &self.family
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.family, TrawlFamily::Canonical)
    }

    pub fn g(&self, x: f64) -> f64 {
        match &self.family {
            TrawlFamily::Canonical => self.c * (1.0 + x).powf(-1.0 - self.gamma),
            TrawlFamily::Custom(c) => (c.g)(x),
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        match &self.family {
            TrawlFamily::Canonical => -self.c * (1.0 + self.gamma) * (1.0 + x).powf(-2.0 - self.gamma),
            TrawlFamily::Custom(c) => (c.g_prime)(x),
        }
    }

    /// Inverse of `g` on `(0, g(0)]`.
    pub fn g_inv(&self, y: f64) -> f64 {
        match &self.family {
            TrawlFamily::Canonical => ((self.c / y).powf(1.0 / (1.0 + self.gamma)) - 1.0).max(0.0),
            TrawlFamily::Custom(c) => (c.g_inv)(y),
        }
    }

    pub fn g0(&self) -> f64 {
        self.g(0.0)
    }

    /// Tail constant `lim x^{2+gamma} |g'(x)|`.
    pub fn c_g(&self) -> f64 {
        match &self.family {
            TrawlFamily::Canonical => self.c * (1.0 + self.gamma),
            TrawlFamily::Custom(c) => c.c_g,
        }
    }

    /// Lebesgue measure of the trawl set, `∫_0^∞ g`.
    pub fn measure(&self) -> Result<f64> {
        self.tail_mass(0.0)
    }

    /// `∫_x^∞ g(s) ds`.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        match &self.family {
            TrawlFamily::Canonical => Ok(self.c * (1.0 + x).powf(-self.gamma) / self.gamma),
            TrawlFamily::Custom(c) => {
                let tol = Tolerance { abs: 1e-13, rel: 1e-11 };
                let est = quad::to_infinity(|s| (c.g)(s), x, 1.0 + x, tol);
                if !est.converged {
                    return Err(validation("trawl function is not integrable"));
                }
                Ok(est.value)
            }
        }
    }

    /// `∫_0^∞ u^p |g'(u)| du`, finite for `0 <= p < 1 + gamma`.
    pub fn g_prime_moment(&self, p: f64) -> Result<f64> {
        if !(p >= 0.0 && p < 1.0 + self.gamma) {
            return Err(validation(format!(
                "moment order {p} outside [0, 1+gamma) for gamma = {}",
                self.gamma
            )));
        }
        match &self.family {
            TrawlFamily::Canonical => {
                let g = self.gamma;
                let ln = statrs::function::gamma::ln_gamma(p + 1.0) + statrs::function::gamma::ln_gamma(1.0 + g - p)
                    - statrs::function::gamma::ln_gamma(2.0 + g);
                Ok(self.c * (1.0 + g) * ln.exp())
            }
            TrawlFamily::Custom(c) => {
                let tol = Tolerance::rel(1e-10);
                let head = quad::from_zero(|u| u.powf(p) * (c.g_prime)(u).abs(), 1.0, tol);
                let tail = quad::to_infinity(|u| u.powf(p) * (c.g_prime)(u).abs(), 1.0, 1.0, tol);
                let est = head.add(tail).require(tol, "trawl derivative moment")?;
                Ok(est.value)
            }
        }
    }

    /// Numerical checks of the trawl hypotheses. Canonical specs hold by construction.
    pub fn validate(&self) -> Result<()> {
        let custom = match &self.family {
            TrawlFamily::Canonical => return Ok(()),
            TrawlFamily::Custom(c) => c,
        };
        let grid: Vec<f64> = (-30..=30).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let mut prev = (custom.g)(0.0);
        if !(prev > 0.0 && prev.is_finite()) {
            return Err(validation("g(0) must be positive and finite"));
        }
        for &x in &grid {
            let gx = (custom.g)(x);
            if !(gx > 0.0 && gx < prev) {
                return Err(validation(format!(
                    "g is not positive and strictly decreasing at x = {x}"
                )));
            }
            prev = gx;
            let back = (custom.g_inv)(gx);
            if (back - x).abs() > 1e-10 * x.max(1.0) {
                return Err(validation(format!("g_inv(g({x})) = {back}")));
            }
            let h = 1e-5 * x.max(1e-3);
            let fd = ((custom.g)(x + h) - (custom.g)((x - h).max(0.0))) / (x + h - (x - h).max(0.0));
            let gp = (custom.g_prime)(x);
            if (fd - gp).abs() > 1e-4 * gp.abs().max(1e-300) {
                return Err(validation(format!("g' disagrees with g at x = {x}: {gp} vs {fd}")));
            }
        }
        for x in [1e3f64, 1e4] {
            let law = x.powf(2.0 + self.gamma) * (custom.g_prime)(x).abs();
            if (law / custom.c_g - 1.0).abs() > 0.01 {
                return Err(validation(format!(
                    "tail law x^(2+gamma)|g'(x)| = {law} at x = {x}, declared C_g = {}",
                    custom.c_g
                )));
            }
        }
        self.measure()?;
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(validation(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

/// Coefficients `(a_j, t_j)` with `t_j` sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct TimeCombo {
    pairs: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for TimeCombo {
    type Error = crate::error::Error;

    fn try_from(pairs: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(pairs)
    }
}

impl From<TimeCombo> for Vec<(f64, f64)> {
    fn from(c: TimeCombo) -> Self {
        c.pairs
    }
}

impl TimeCombo {
    pub fn new(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(validation("time combination needs at least one pair"));
        }
        for &(a, t) in &pairs {
            if !a.is_finite() || !(t >= 0.0 && t.is_finite()) {
                return Err(validation(format!("invalid pair (a = {a}, t = {t})")));
            }
        }
        pairs.sort_by(|x, y| x.1.total_cmp(&y.1));
        Ok(Self { pairs })
    }

    pub fn single(t: f64) -> Result<Self> {
        Self::new(vec![(1.0, t)])
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn t_max(&self) -> f64 {
        self.pairs.last().map_or(0.0, |p| p.1)
    }

    pub fn sum_abs(&self) -> f64 {
        self.pairs.iter().map(|p| p.0.abs()).sum()
    }

    /// `h_T(r, u) = Σ a_j f(T t_j, r, u)`.
    pub fn h(&self, big_t: f64, r: f64, u: f64) -> f64 {
        self.pairs.iter().map(|&(a, t)| a * f_eval(big_t * t, r, u)).sum()
    }

    /// `a(r) = Σ a_j 1[0, t_j](r)`.
    pub fn a(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        self.pairs.iter().filter(|p| r <= p.1).map(|p| p.0).sum()
    }

    /// `∫_0^∞ |a(r)|^p dr`, exact for the step function.
    pub fn a_norm_pow(&self, p: f64) -> f64 {
        let mut total = 0.0;
        let mut left = 0.0;
        for (k, &(_, t)) in self.pairs.iter().enumerate() {
            let level: f64 = self.pairs[k..].iter().map(|q| q.0).sum();
            if t > left {
                total += level.abs().powf(p) * (t - left);
                left = t;
            }
        }
        total
    }

    /// Sorted, deduplicated breakpoints in `r` of `h_T(., u)` (including 0).
    pub fn r_breaks(&self, big_t: f64, u: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(0.0);
        for &(_, t) in &self.pairs {
            let tau = big_t * t;
            out.push(u.min(tau));
            out.push(u.max(tau));
            out.push(tau + u);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
    }

    /// Values of `u` where the piece structure of `h_T(., u)` changes.
    pub fn u_kinks(&self, big_t: f64) -> Vec<f64> {
        let mut k: Vec<f64> = Vec::new();
        for (i, &(_, ti)) in self.pairs.iter().enumerate() {
            k.push(big_t * ti);
            for &(_, tj) in &self.pairs[..i] {
                k.push(big_t * (ti - tj));
            }
        }
        k.retain(|&x| x > 0.0);
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }
}
