//! One-dimensional quadrature building blocks.
//!
//! Everything numerical in the crate funnels through a small set of rules:
//! adaptive Gauss-Kronrod (7/15) with a QUADPACK-style error estimate,
//! fixed Gauss-Legendre rules for tensor grids, logarithmic panelling for
//! integrals that run off to zero or infinity, and Wynn's epsilon algorithm
//! for alternating tails. All routines are deterministic: intervals are
//! refined in a fixed order and partial sums are accumulated left to right.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Mixed absolute / relative tolerance, met when `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn abs(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }

    pub const fn rel(rel: f64) -> Self {
        Self { abs: 0.0, rel }
    }

    pub fn bound(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            abs: self.abs * factor,
            rel: self.rel * factor,
        }
    }
}

/// A quadrature result with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        value: 0.0,
        error: 0.0,
        evals: 0,
        converged: true,
    };

    /// Turns an unconverged estimate into an accuracy error.
    pub fn require(self, tol: Tolerance, context: &str) -> Result<Self> {
        if self.converged && self.value.is_finite() {
            Ok(self)
        } else {
            Err(Error::Accuracy {
                achieved: self.error,
                requested: tol.bound(self.value),
                context: context.to_string(),
            })
        }
    }

    pub fn add(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            error: self.error + other.error,
            evals: self.evals + other.evals,
            converged: self.converged && other.converged,
        }
    }
}

/// Single 15-point Kronrod panel. Returns (integral, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    seq: usize,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Adaptive Gauss-Kronrod integration over `[points[0], points[last]]`,
/// seeded with the given breakpoints (which must be nondecreasing).
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: Tolerance, max_panels: usize) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    let mut seq = 0usize;
    let mut evals = 0usize;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (value, error) = gk15(&mut f, a, b);
        evals += 15;
        heap.push(Panel {
            a,
            b,
            value,
            error,
            seq,
        });
        seq += 1;
    }
    loop {
        let (total, err) = heap
            .iter()
            .chain(frozen.iter())
            .fold((0.0, 0.0), |acc, p| (acc.0 + p.value, acc.1 + p.error));
        if err <= tol.bound(total) || heap.is_empty() {
            return finish(heap, frozen, evals, tol);
        }
        if seq >= max_panels {
            return finish(heap, frozen, evals, tol);
        }
        let worst = heap.pop().expect("heap non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e-15 * worst.a.abs().max(1e-300) {
            frozen.push(worst);
            continue;
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&mut f, a, b);
            evals += 15;
            heap.push(Panel {
                a,
                b,
                value,
                error,
                seq,
            });
            seq += 1;
        }
    }
}

fn finish(heap: BinaryHeap<Panel>, frozen: Vec<Panel>, evals: usize, tol: Tolerance) -> Estimate {
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.extend(frozen);
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value: f64 = panels.iter().map(|p| p.value).sum();
    let error: f64 = panels.iter().map(|p| p.error).sum();
    Estimate {
        value,
        error,
        evals,
        converged: error <= tol.bound(value) && value.is_finite(),
    }
}

/// Integrates `g(v)` over `v in [0, inf)` for integrands that decay in `v`,
/// using panels of doubling width (capped at 16). This is the workhorse for integrals
/// mapped by logarithmic substitutions (`y = b e^{-v}` towards zero,
/// `y = b e^{v}` towards infinity), where algebraic behaviour becomes
/// exponential.
pub fn log_panels<F: FnMut(f64) -> f64>(mut g: F, tol: Tolerance, v_max: f64) -> Estimate {
    let mut total = Estimate::ZERO;
    let mut lo = 0.0;
    let mut width = 1.0;
    let mut small_streak = 0;
    let mut last_negligible = false;
    while lo < v_max {
        let hi = (lo + width).min(v_max);
        let local = Tolerance {
            abs: 0.05 * tol.bound(total.value).max(tol.abs),
            rel: 0.05 * tol.rel,
        };
        let panel = adaptive(&mut g, &[lo, hi], local, 400);
        total = total.add(panel);
        if !(panel.value.abs() < 1e200) {
            total.converged = false;
            return total;
        }
        let negligible = panel.value.abs() <= 1e-3 * tol.bound(total.value) || panel.value.abs() <= 1e-300;
        last_negligible = negligible;
        if negligible && lo >= 4.0 {
            small_streak += 1;
            if small_streak >= 2 {
                total.converged = total.error <= tol.bound(total.value) && total.value.is_finite();
                return total;
            }
        } else {
            small_streak = 0;
        }
        lo = hi;
        if lo >= 2.0 && width < 16.0 {
            width *= 2.0;
        }
    }
    total.converged = last_negligible && total.error <= tol.bound(total.value);
    total
}

/// `∫_a^∞ f(x) dx` via `x = a + scale (e^v - 1)`.
pub fn to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, scale: f64, tol: Tolerance) -> Estimate {
    log_panels(
        |v| {
            let ev = v.exp();
            let x = a + scale * (ev - 1.0);
            if !x.is_finite() {
                return 0.0;
            }
            let v = f(x) * scale * ev;
            // 0 * inf at the far end of the map
            if v.is_nan() {
                0.0
            } else {
                v
            }
        },
        tol,
        700.0,
    )
}

/// `∫_0^b f(y) dy` via `y = b e^{-v}`, for integrands singular at zero.
pub fn from_zero<F: FnMut(f64) -> f64>(mut f: F, b: f64, tol: Tolerance) -> Estimate {
    log_panels(
        |v| {
            let y = b * (-v).exp();
            if y <= 0.0 {
                return 0.0;
            }
            let v = f(y) * y;
            if v.is_nan() {
                0.0
            } else {
                v
            }
        },
        tol,
        740.0,
    )
}

/// Wynn's epsilon extrapolation of a sequence of partial sums.
pub fn wynn_epsilon(partials: &[f64]) -> f64 {
    let n = partials.len();
    if n < 3 {
        return partials.last().copied().unwrap_or(0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partials.to_vec();
    let mut best = *partials.last().unwrap();
    let mut k = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            let e = if d.abs() < 1e-300 {
                f64::INFINITY
            } else {
                prev[i + 1] + 1.0 / d
            };
            next.push(e);
        }
        prev = cur;
        cur = next;
        k += 1;
        if k % 2 == 0 {
            match cur.last() {
                Some(v) if v.is_finite() => best = *v,
                _ => break,
            }
        }
    }
    best
}

/// Fixed Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + h * x, w * h))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
