//! Symmetric Lévy measures and their exponents
//! `psi(theta) = ∫ (1 - cos(theta y)) nu(dy)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{validation, Error, Result};
use crate::quad::{self, Estimate, Tolerance};

/// Default absolute tolerance for quadrature of `psi`.
pub const PSI_TOL: f64 = 1e-9;

/// Piecewise-linear Lévy density on `|x| in [xs[0], xs[last]]`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    xs: Vec<f64>,
    hs: Vec<f64>,
}

impl DensityTable {
    /// Accepts `(x, h(x))` rows on either or both half-lines. Rows with
    /// negative `x` must mirror the positive half.
    pub fn new(rows: &[(f64, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(validation("density table is empty"));
        }
        for &(x, h) in rows {
            if !x.is_finite() || !(h >= 0.0 && h.is_finite()) {
                return Err(validation(format!("density table row ({x}, {h}) is invalid")));
            }
        }
        let mut pos: Vec<(f64, f64)> = rows.iter().copied().filter(|r| r.0 >= 0.0).collect();
        let neg: Vec<(f64, f64)> = rows.iter().copied().filter(|r| r.0 < 0.0).collect();
        if pos.is_empty() {
            pos = neg.iter().map(|&(x, h)| (-x, h)).collect();
        }
        pos.sort_by(|a, b| a.0.total_cmp(&b.0));
        pos.dedup_by(|a, b| a.0 == b.0);
        if pos.len() < 2 {
            return Err(validation("density table needs at least two distinct |x| nodes"));
        }
        let table = Self {
            xs: pos.iter().map(|r| r.0).collect(),
            hs: pos.iter().map(|r| r.1).collect(),
        };
        for &(x, h) in &neg {
            let mirrored = table.eval(-x);
            if (mirrored - h).abs() > 1e-9 * h.abs().max(mirrored.abs()).max(1e-300) {
                return Err(validation(format!(
                    "density is not symmetric: h({x}) = {h} but h({}) = {mirrored}",
                    -x
                )));
            }
        }
        Ok(table)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let y = y.abs();
        let n = self.xs.len();
        if y < self.xs[0] || y > self.xs[n - 1] {
            return 0.0;
        }
        let k = self.xs.partition_point(|&x| x <= y).clamp(1, n - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let w = (y - x0) / (x1 - x0);
        self.hs[k - 1] * (1.0 - w) + self.hs[k] * w
    }

    /// Linear segments `(y0, y1, h0, h1)` clipped to `lo <= y < hi`.
    pub fn segments(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.xs.windows(2).enumerate().filter_map(move |(k, w)| {
            let (a, b) = (w[0].max(lo), w[1].min(hi));
            if b <= a {
                return None;
            }
            let slope = (self.hs[k + 1] - self.hs[k]) / (w[1] - w[0]);
            let h_at = |y: f64| self.hs[k] + slope * (y - w[0]);
            Some((a, b, h_at(a), h_at(b)))
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }
}

pub(crate) type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lévy density on `(0, ∞)`, extended evenly.
#[derive(Clone)]
pub struct DensityFn(pub ScalarFn);

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DensityFn(..)")
    }
}

#[derive(Debug, Clone)]
pub enum LevyKind {
    SymmetricStable { alpha: f64 },
    PoissonDifference { lambda: f64, jump: f64 },
    Table(DensityTable),
    Density(DensityFn),
}

#[derive(Debug, Clone)]
pub struct LevyBasisSpec {
    pub kind: LevyKind,
    pub alpha_at_infinity: Option<f64>,
    pub alpha_at_zero: Option<f64>,
    pub moment_kappa: Option<f64>,
}

impl LevyBasisSpec {
    pub fn stable(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(validation(format!("stable index must lie in (0, 2), got {alpha}")));
        }
        Ok(Self {
            kind: LevyKind::SymmetricStable { alpha },
            alpha_at_infinity: Some(alpha),
            alpha_at_zero: Some(alpha),
            moment_kappa: None,
        })
    }

    /// `nu = lambda (delta_jump + delta_{-jump})`. `lambda = 0` gives the empty base.
    pub fn poisson_difference(lambda: f64, jump: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) || !(jump > 0.0 && jump.is_finite()) {
            return Err(validation(format!(
                "poisson difference needs lambda >= 0 and jump > 0, got ({lambda}, {jump})"
            )));
        }
        Ok(Self {
            kind: LevyKind::PoissonDifference { lambda, jump },
            alpha_at_infinity: None,
            alpha_at_zero: None,
            moment_kappa: None,
        })
    }

    pub fn table(table: DensityTable) -> Self {
        Self {
            kind: LevyKind::Table(table),
            alpha_at_infinity: None,
            alpha_at_zero: None,
            moment_kappa: None,
        }
    }

    /// Density given as a callable on `(0, ∞)`. Checks the Lévy integrability condition.
    pub fn density(h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let spec = Self {
            kind: LevyKind::Density(DensityFn(Arc::new(h))),
            alpha_at_infinity: None,
            alpha_at_zero: None,
            moment_kappa: None,
        };
        spec.check_levy_condition()?;
        Ok(spec)
    }

    pub fn with_declared(mut self, at_infinity: Option<f64>, at_zero: Option<f64>, kappa: Option<f64>) -> Self {
        if at_infinity.is_some() {
            self.alpha_at_infinity = at_infinity;
        }
        if at_zero.is_some() {
            self.alpha_at_zero = at_zero;
        }
        if kappa.is_some() {
            self.moment_kappa = kappa;
        }
        self
    }

    pub fn stable_alpha(&self) -> Option<f64> {
        match self.kind {
            LevyKind::SymmetricStable { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// `∫ (1 ∧ y^2) nu(dy)`; errors when the quadrature diverges.
    pub fn check_levy_condition(&self) -> Result<f64> {
        LevyExponent::new(self.clone())
            .integrate_even(|y| (y * y).min(1.0), "Levy integrability")
            .map_err(|e| validation(format!("Levy integrability condition fails: {e}")))
    }
}

/// `ν` restricted to `lo <= |x| < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const FULL: Band = Band {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, y: f64) -> bool {
        let y = y.abs();
        y >= self.lo && y < self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == 0.0 && self.hi == f64::INFINITY
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    ClosedForm,
    Quadrature { tol: f64 },
}

#[derive(Debug, Clone)]
pub struct LevyExponent {
    spec: LevyBasisSpec,
    band: Band,
    mode: EvalMode,
}

impl LevyExponent {
    pub fn new(spec: LevyBasisSpec) -> Self {
        Self {
            spec,
            band: Band::FULL,
            mode: EvalMode::ClosedForm,
        }
    }

    /// Forces quadrature of the defining integral even where a closed form exists.
    pub fn with_quadrature(mut self, tol: f64) -> Self {
        self.mode = EvalMode::Quadrature { tol };
        self
    }

    pub fn spec(&self) -> &LevyBasisSpec {
        &self.spec
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    fn tol(&self) -> f64 {
        match self.mode {
            EvalMode::ClosedForm => PSI_TOL,
            EvalMode::Quadrature { tol } => tol,
        }
    }

    /// `ψ` is exactly `|θ|^α` (unrestricted stable in closed-form mode).
    pub fn pure_stable(&self) -> Option<f64> {
        match (&self.spec.kind, self.mode) {
            (LevyKind::SymmetricStable { alpha }, EvalMode::ClosedForm) if self.band.is_full() => Some(*alpha),
            _ => None,
        }
    }

    /// `Some((lambda, jump))` when `ν` is a (possibly empty) pair of atoms.
    pub fn atoms(&self) -> Option<(f64, f64)> {
        match self.spec.kind {
            LevyKind::PoissonDifference { lambda, jump } => {
                Some((if self.band.contains(jump) { lambda } else { 0.0 }, jump))
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        if self.band.is_empty() {
            return true;
        }
        match &self.spec.kind {
            LevyKind::PoissonDifference { .. } => self.atoms().unwrap().0 == 0.0,
            LevyKind::Table(t) => t.segments(self.band.lo, self.band.hi).all(|s| s.2 == 0.0 && s.3 == 0.0),
            _ => false,
        }
    }

    /// `(ψ₁, ψ₂)` from `ν` restricted to `|x| < threshold` and `|x| >= threshold`.
    pub fn split(&self, threshold: f64) -> Result<(LevyExponent, LevyExponent)> {
        if !(threshold > 0.0) {
            return Err(validation(format!("split threshold must be positive, got {threshold}")));
        }
        let mut small = self.clone();
        small.band.hi = self.band.hi.min(threshold);
        let mut large = self.clone();
        large.band.lo = self.band.lo.max(threshold);
        Ok((small, large))
    }

    pub fn psi(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(validation(format!("theta must be finite, got {theta}")));
        }
        let th = theta.abs();
        if th == 0.0 || self.band.is_empty() {
            return Ok(0.0);
        }
        match &self.spec.kind {
            LevyKind::SymmetricStable { .. } if self.pure_stable().is_some() => {
                Ok(th.powf(self.pure_stable().unwrap()))
            }
            LevyKind::PoissonDifference { .. } => {
                let (lambda, jump) = self.atoms().unwrap();
                Ok(2.0 * lambda * one_minus_cos(jump * th))
            }
            LevyKind::Table(t) => Ok(psi_table(t, self.band, th)),
            LevyKind::SymmetricStable { .. } | LevyKind::Density(_) => {
                let (h, y2h) = self.density_forms().expect("density-backed measure");
                self.psi_density(th, &*h, &*y2h)
            }
        }
    }

    /// `(h, y^2 h)` for measures with a density callable. The second form is
    /// bounded near 0 for stable densities, which keeps near-origin integrands
    /// from overflowing.
    pub(crate) fn density_forms(&self) -> Option<(ScalarFn, ScalarFn)> {
        match &self.spec.kind {
            LevyKind::SymmetricStable { alpha } => {
                let (c, a) = (c_alpha(*alpha), *alpha);
                Some((
                    Arc::new(move |y: f64| c * y.powf(-1.0 - a)),
                    Arc::new(move |y: f64| c * y.powf(1.0 - a)),
                ))
            }
            LevyKind::Density(h) => {
                let h2 = h.0.clone();
                Some((h.0.clone(), Arc::new(move |y: f64| y * y * h2(y))))
            }
            _ => None,
        }
    }

    fn psi_density(&self, th: f64, h: &dyn Fn(f64) -> f64, y2h: &dyn Fn(f64) -> f64) -> Result<f64> {
        let tol = Tolerance {
            abs: self.tol(),
            rel: 1e-11,
        };
        let Band { lo, hi } = self.band;
        let b = PI / th;
        let mut est = Estimate::ZERO;
        if lo < b {
            let top = b.min(hi);
            let near = |y: f64| one_minus_cos_over_sq(th * y) * th * th * y2h(y);
            let part = if lo == 0.0 {
                quad::from_zero(near, top, tol.scaled(0.3))
            } else {
                quad::adaptive(near, &geometric_points(lo, top), tol.scaled(0.3), 4000)
            };
            est = est.add(part);
        }
        let start = lo.max(b);
        if start < hi {
            est = est.add(far_part(th, start, hi, h, tol.scaled(0.3)));
        }
        let est = est.require(tol, "psi quadrature")?;
        Ok(2.0 * est.value.max(0.0))
    }

    /// `∫ k(y) ν(dy)` for an even test function `k` with `k(y) = O(y^2)` at 0 when needed.
    pub fn integrate_even(&self, k: impl Fn(f64) -> f64, context: &str) -> Result<f64> {
        if self.band.is_empty() {
            return Ok(0.0);
        }
        let Band { lo, hi } = self.band;
        let tol = Tolerance { abs: 1e-13, rel: 1e-10 };
        match &self.spec.kind {
            LevyKind::PoissonDifference { .. } => {
                let (lambda, jump) = self.atoms().unwrap();
                Ok(if lambda == 0.0 { 0.0 } else { 2.0 * lambda * k(jump) })
            }
            LevyKind::Table(t) => {
                let mut est = Estimate::ZERO;
                for (a, b, h0, h1) in t.segments(lo, hi) {
                    let seg = quad::adaptive(|y| k(y) * (h0 + (h1 - h0) * (y - a) / (b - a)), &[a, b], tol, 2000);
                    est = est.add(seg);
                }
                Ok(2.0 * est.require(tol, context)?.value)
            }
            LevyKind::SymmetricStable { .. } | LevyKind::Density(_) => {
                let (h, y2h) = self.density_forms().expect("density-backed measure");
                density_integral(&*h, &*y2h, &k, self.band, tol, context)
            }
        }
    }

    /// `ν(ℝ)`, infinite for infinite-activity restrictions.
    pub fn total_mass(&self) -> Result<f64> {
        match self.integrate_even(|_| 1.0, "total Levy mass") {
            Ok(v) => Ok(v),
            Err(Error::Accuracy { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// `∫ |y|^p ν(dy)`.
    pub fn abs_moment(&self, p: f64) -> Result<f64> {
        self.integrate_even(|y| y.abs().powf(p), "absolute moment of the Levy measure")
    }

    /// Estimate of `lim ψ(θ)/|θ|^β` as `θ → 0` (`small = true`) or `θ → ∞`.
    pub fn power_constant(&self, beta: f64, small: bool) -> Result<f64> {
        if let Some(alpha) = self.pure_stable() {
            return Ok(if (alpha - beta).abs() < 1e-12 {
                1.0
            } else if (alpha > beta) == small {
                0.0
            } else {
                f64::INFINITY
            });
        }
        let exps: Vec<f64> = if small {
            vec![-4.0, -5.0, -6.0]
        } else {
            vec![4.0, 5.0, 6.0]
        };
        let mut vals = Vec::new();
        for e in exps {
            let th = 10f64.powf(e);
            vals.push(self.psi(th)? / th.powf(beta));
        }
        // Richardson step assuming a first-order correction in the decade ratio
        let (a, b, c) = (vals[0], vals[1], vals[2]);
        let denom = (b - a) - (c - b);
        if denom.abs() > 1e-12 * c.abs() && ((c - b) / (b - a)).abs() < 0.9 {
            Ok(c - (c - b) * (c - b) / denom)
        } else {
            Ok(c)
        }
    }
}

/// `1 - cos x` without cancellation.
#[inline]
pub fn one_minus_cos(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// `(1 - cos x) / x^2`, finite at 0.
#[inline]
pub fn one_minus_cos_over_sq(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        return 0.5;
    }
    let s = (0.5 * x).sin() / (0.5 * x);
    0.5 * s * s
}

fn geometric_points(lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    if lo > 0.0 {
        let mut x = lo * 4.0;
        while x < hi {
            pts.push(x);
            x *= 4.0;
        }
    }
    pts.push(hi);
    pts
}

/// `∫_start^hi (1 - cos(θy)) h(y) dy` for `start >= π/θ`.
fn far_part(th: f64, start: f64, hi: f64, h: &dyn Fn(f64) -> f64, tol: Tolerance) -> Estimate {
    let half = PI / th;
    if hi.is_finite() && (hi - start) <= 400.0 * half {
        let mut pts = vec![start];
        let mut y = (start / half).floor() * half + half;
        while y < hi {
            pts.push(y);
            y += half;
        }
        pts.push(hi);
        return quad::adaptive(|y| one_minus_cos(th * y) * h(y), &pts, tol, 20_000);
    }
    // A - B with A = ∫h and B = ∫cos(θy)h accelerated over half periods.
    let a = if hi.is_finite() {
        quad::adaptive(h, &geometric_points(start, hi), tol.scaled(0.5), 4000)
    } else {
        quad::to_infinity(h, start, start, tol.scaled(0.5))
    };
    let b = oscillatory_cos(th, start, hi, h, a.value, tol.scaled(0.5));
    Estimate {
        value: a.value - b.value,
        error: a.error + b.error,
        evals: a.evals + b.evals,
        converged: a.converged && b.converged,
    }
}

fn oscillatory_cos(th: f64, start: f64, hi: f64, h: &dyn Fn(f64) -> f64, a_total: f64, tol: Tolerance) -> Estimate {
    let half = PI / th;
    let mut partials = Vec::new();
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    let mut left = start;
    let mut right = (start / half).floor() * half + half;
    let mut last_extrap = f64::NAN;
    let mut stable_count = 0;
    let mut mass = 0.0;
    let mut terms = Vec::new();
    let mut ends = Vec::new();
    for _ in 0..2000 {
        let r = right.min(hi);
        let panel = quad::adaptive(|y| (th * y).cos() * h(y), &[left, r], tol.scaled(1e-3), 200);
        sum += panel.value;
        err += panel.error;
        evals += panel.evals;
        partials.push(sum);
        mass += quad::adaptive(h, &[left, r], tol.scaled(1e-3), 200).value;
        // |remaining cos-weighted tail| <= remaining mass of h
        let exhausted = a_total - mass <= 0.1 * tol.bound(sum);
        if r >= hi || exhausted {
            return Estimate {
                value: sum,
                error: err,
                evals,
                converged: err <= tol.bound(sum),
            };
        }
        left = r;
        right = r + half;
        terms.push(panel.value);
        ends.push(h(r));
        let n = terms.len();
        if n >= 8 && regular_alternation(&terms[n - 6..]) && convex_tail(&ends[n - 6..]) {
            let window = &partials[partials.len().saturating_sub(24)..];
            let extrap = quad::wynn_epsilon(window);
            if (extrap - last_extrap).abs() <= 0.1 * tol.bound(extrap) {
                stable_count += 1;
                if stable_count >= 2 {
                    return Estimate {
                        value: extrap,
                        error: err + (extrap - last_extrap).abs(),
                        evals,
                        converged: true,
                    };
                }
            } else {
                stable_count = 0;
            }
            last_extrap = extrap;
        }
    }
    Estimate {
        value: last_extrap,
        error: f64::INFINITY,
        evals,
        converged: false,
    }
}

/// Signs alternate and magnitudes do not grow, the regime where Wynn's
/// epsilon is trustworthy.
fn regular_alternation(terms: &[f64]) -> bool {
    terms
        .windows(2)
        .all(|w| w[0] * w[1] < 0.0 && w[1].abs() <= w[0].abs() * (1.0 + 1e-9))
}

/// Positive, decreasing and strictly convex samples: a genuine tail rather
/// than a compactly supported ramp, which Wynn would extrapolate past its end.
fn convex_tail(h: &[f64]) -> bool {
    h.iter().all(|&v| v > 0.0)
        && h.windows(2).all(|w| w[1] < w[0])
        && h.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > 1e-12 * w[0])
}

fn psi_table(t: &DensityTable, band: Band, th: f64) -> f64 {
    let mut total = 0.0;
    for (a, b, h0, h1) in t.segments(band.lo, band.hi) {
        let q = (h1 - h0) / (b - a);
        let p = h0 - q * a;
        let span = th * (b - a);
        if span <= 50.0 {
            let n = ((span / 1.5).ceil() as usize).max(1);
            let w = (b - a) / n as f64;
            for k in 0..n {
                let (y0, y1) = (a + k as f64 * w, a + (k + 1) as f64 * w);
                total += quad::gk15(&mut |y| one_minus_cos(th * y) * (p + q * y), y0, y1).0;
            }
        } else {
            let anti =
                |y: f64| p * y + 0.5 * q * y * y - ((p + q * y) * (th * y).sin() / th + q * (th * y).cos() / (th * th));
            total += anti(b) - anti(a);
        }
    }
    (2.0 * total).max(0.0)
}

/// `2 ∫_band k(y) h(y) dy` over the positive half-line. Below 1 the density
/// enters through `y^2 h(y)`.
fn density_integral(
    h: &dyn Fn(f64) -> f64,
    y2h: &dyn Fn(f64) -> f64,
    k: &dyn Fn(f64) -> f64,
    band: Band,
    tol: Tolerance,
    context: &str,
) -> Result<f64> {
    let Band { lo, hi } = band;
    let near = |y: f64| k(y) / (y * y) * y2h(y);
    let f = |y: f64| k(y) * h(y);
    let mid = if lo > 0.0 { lo.max(1.0).min(hi) } else { 1f64.min(hi) };
    let mut est = Estimate::ZERO;
    if lo < mid {
        est = est.add(if lo == 0.0 {
            quad::from_zero(near, mid, tol)
        } else {
            quad::adaptive(near, &geometric_points(lo, mid), tol, 4000)
        });
    }
    if mid < hi {
        est = est.add(if hi.is_finite() {
            quad::adaptive(f, &geometric_points(mid, hi), tol, 4000)
        } else {
            quad::to_infinity(f, mid, mid, tol)
        });
    }
    Ok(2.0 * est.require(tol, context)?.value)
}

/// `K_β = ∫_0^∞ (1 - cos u) u^{-1-β} du` by quadrature.
pub fn k_beta_quadrature(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(validation(format!("K_beta needs beta in (0, 2), got {beta}")));
    }
    let tol = Tolerance { abs: 1e-15, rel: 1e-13 };
    let h = move |y: f64| y.powf(-1.0 - beta);
    let near = quad::from_zero(|y| one_minus_cos_over_sq(y) * y.powf(1.0 - beta), PI, tol);
    let far = far_part(1.0, PI, f64::INFINITY, &h, tol);
    Ok(near.add(far).require(tol, "K_beta")?.value)
}

/// `K_β` in closed form, `π / (2 Γ(1+β) sin(πβ/2))`.
pub fn k_beta(beta: f64) -> f64 {
    PI / (2.0 * statrs::function::gamma::gamma(1.0 + beta) * (PI * beta / 2.0).sin())
}

/// Constant `c_α` with `∫ (1 - cos θy) c_α |y|^{-1-α} dy = |θ|^α`, calibrated by
/// quadrature once per `α` and cached.
pub fn c_alpha(alpha: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&alpha.to_bits()) {
        return *v;
    }
    let v = match k_beta_quadrature(alpha) {
        Ok(k) => 1.0 / (2.0 * k),
        Err(_) => 1.0 / (2.0 * k_beta(alpha)),
    };
    cache.lock().unwrap().insert(alpha.to_bits(), v);
    v
}
