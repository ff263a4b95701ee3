//! Samplers for trawl geometry and Lévy marks.

use rand::Rng;

use crate::error::{validation, Error, Result};
use crate::levy::{LevyExponent, LevyKind};
use crate::quad::{self, Tolerance};
use crate::trawl::{TrawlFamily, TrawlSpec};

/// Uniform draw on `(0, 1]`.
#[inline]
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Inverse of the tail mass `G(x) = ∫_x^∞ g` for custom trawls.
#[derive(Debug, Clone)]
struct TailTable {
    xs: Vec<f64>,
    tails: Vec<f64>,
}

/// Draws points of the trawl geometry: the hypograph `{0 < y < g(x)}` and
/// lifetimes `g⁻¹(y)`.
#[derive(Debug, Clone)]
pub struct TrawlSampler {
    trawl: TrawlSpec,
    g0: f64,
    measure: f64,
    table: Option<TailTable>,
}

impl TrawlSampler {
    pub fn new(trawl: &TrawlSpec) -> Result<Self> {
        let table = match trawl.family() {
            TrawlFamily::Canonical => None,
            TrawlFamily::Custom(_) => Some(TailTable::build(trawl)?),
        };
        Ok(Self {
            trawl: trawl.clone(),
            g0: trawl.g0(),
            measure: trawl.measure()?,
            table,
        })
    }

    pub fn trawl(&self) -> &TrawlSpec {
        &self.trawl
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// `∫_0^∞ g`.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// `g⁻¹(y)` for `y` uniform on `(0, g(0))`, i.e. `u` with density `|g'(u)| / g(0)`.
    pub fn lifetime<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.trawl.g_inv(self.g0 * open_unit(rng))
    }

    /// `x > x0` with density `g(x) / ∫_{x0}^∞ g`.
    pub fn tail_point<R: Rng + ?Sized>(&self, x0: f64, rng: &mut R) -> f64 {
        let v = open_unit(rng);
        match &self.table {
            None => {
                let gamma = self.trawl.gamma();
                (1.0 + x0) * v.powf(-1.0 / gamma) - 1.0
            }
            Some(t) => {
                let target = v * t.tail(&self.trawl, x0);
                t.invert(&self.trawl, target).max(x0)
            }
        }
    }

    /// A point uniform in the hypograph of `g` over `(x0, ∞)`, returned as
    /// `(x, g⁻¹(y))` so the lifetime exceeds `x`.
    pub fn hypograph<R: Rng + ?Sized>(&self, x0: f64, rng: &mut R) -> (f64, f64) {
        let x = self.tail_point(x0, rng);
        let y = self.trawl.g(x) * open_unit(rng);
        (x, self.trawl.g_inv(y).max(x))
    }

    /// `∫_{x0}^∞ g`.
    pub fn tail_mass(&self, x0: f64) -> f64 {
        match &self.table {
            None => self.trawl.tail_mass(x0).unwrap_or(0.0),
            Some(t) => t.tail(&self.trawl, x0),
        }
    }
}

fn g_integral(trawl: &TrawlSpec, a: f64, b: f64) -> f64 {
    quad::adaptive(|x| trawl.g(x), &[a, b], Tolerance { abs: 1e-15, rel: 1e-12 }, 200).value
}

impl TailTable {
    fn build(trawl: &TrawlSpec) -> Result<Self> {
        let mut xs = vec![0.0];
        let mut x: f64 = 1e-4;
        while x <= 1e15 {
            xs.push(x);
            x *= 10f64.powf(1.0 / 40.0);
        }
        let last = *xs.last().unwrap();
        let mut tails = vec![0.0; xs.len()];
        tails[xs.len() - 1] = trawl.tail_mass(last)?;
        for k in (0..xs.len() - 1).rev() {
            tails[k] = tails[k + 1] + g_integral(trawl, xs[k], xs[k + 1]);
        }
        if !tails.iter().all(|t| t.is_finite() && *t >= 0.0) {
            return Err(validation("trawl tail mass table is not finite"));
        }
        Ok(Self { xs, tails })
    }

    fn tail(&self, trawl: &TrawlSpec, x: f64) -> f64 {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.tails[n - 1] * (x / self.xs[n - 1]).powf(-trawl.gamma());
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        self.tails[k] - g_integral(trawl, self.xs[k], x)
    }

    fn invert(&self, trawl: &TrawlSpec, target: f64) -> f64 {
        let n = self.xs.len();
        if target <= self.tails[n - 1] {
            return self.xs[n - 1] * (target / self.tails[n - 1]).powf(-1.0 / trawl.gamma());
        }
        // tails is decreasing; find the cell with tails[k] >= target > tails[k+1]
        let k = self.tails.partition_point(|&t| t >= target).max(1) - 1;
        let k = k.min(n - 2);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (l0, l1) = (self.tails[k].ln(), self.tails[k + 1].ln());
        let (a0, a1) = ((1.0 + x0).ln(), (1.0 + x1).ln());
        let w = if l1 == l0 { 0.5 } else { (target.ln() - l0) / (l1 - l0) };
        let mut x = ((a0 + w * (a1 - a0)).exp() - 1.0).clamp(x0, x1);
        for _ in 0..2 {
            let gx = trawl.g(x);
            if gx <= 0.0 {
                break;
            }
            let resid = self.tails[k] - g_integral(trawl, x0, x) - target;
            x = (x + resid / gx).clamp(x0, x1);
        }
        x
    }
}

/// Piecewise-linear density given by segments `(a, b, h(a), h(b))`, sampled by inverse CDF.
#[derive(Debug, Clone)]
struct LinearCdf {
    segs: Vec<(f64, f64, f64, f64)>,
    cum: Vec<f64>,
}

impl LinearCdf {
    fn from_segments(segs: &[(f64, f64, f64, f64)]) -> Result<Self> {
        let mut cum = Vec::with_capacity(segs.len() + 1);
        cum.push(0.0);
        for &(a, b, h0, h1) in segs {
            cum.push(cum.last().unwrap() + 0.5 * (h0 + h1) * (b - a));
        }
        if !(*cum.last().unwrap() > 0.0) {
            return Err(validation("mark distribution has no mass"));
        }
        Ok(Self {
            segs: segs.to_vec(),
            cum,
        })
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn sample(&self, v: f64) -> f64 {
        let target = v * self.total();
        let k = (self.cum.partition_point(|&c| c < target).max(1) - 1).min(self.segs.len() - 1);
        let (a, b, h0, h1) = self.segs[k];
        let m = target - self.cum[k];
        let w = b - a;
        let slope = (h1 - h0) / w;
        // solve h0 s + slope s^2 / 2 = m on [0, w]
        let disc = (h0 * h0 + 2.0 * slope * m).max(0.0);
        let denom = h0 + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * m / denom } else { 0.5 * w };
        a + s.clamp(0.0, w)
    }
}

/// Draws marks `η ~ ν / ν(ℝ)` for a finite, symmetric `ν`.
#[derive(Debug, Clone)]
pub enum MarkSampler {
    /// `ν ≡ 0`.
    Empty,
    Atom {
        jump: f64,
        mass: f64,
    },
    Linear {
        cdf: LinearCdfHandle,
        mass: f64,
    },
}

/// Opaque inverse-CDF table of `|η|`.
#[derive(Debug, Clone)]
pub struct LinearCdfHandle(LinearCdf);

/// Relative accuracy of tabulated mark distributions.
pub const MARK_TABLE_TOL: f64 = 1e-8;

impl MarkSampler {
    pub fn new(levy: &LevyExponent) -> Result<Self> {
        if levy.is_zero() {
            return Ok(MarkSampler::Empty);
        }
        let band = levy.band();
        match &levy.spec().kind {
            LevyKind::PoissonDifference { .. } => {
                let (lambda, jump) = levy.atoms().unwrap();
                Ok(MarkSampler::Atom {
                    jump,
                    mass: 2.0 * lambda,
                })
            }
            LevyKind::Table(t) => {
                let segs: Vec<_> = t.segments(band.lo, band.hi).collect();
                let cdf = LinearCdf::from_segments(&segs)?;
                let mass = 2.0 * cdf.total();
                Ok(MarkSampler::Linear {
                    cdf: LinearCdfHandle(cdf),
                    mass,
                })
            }
            LevyKind::SymmetricStable { .. } | LevyKind::Density(_) => {
                let mass = levy.total_mass()?;
                if !mass.is_finite() {
                    return Err(Error::Unsupported(
                        "infinite-activity Levy measure: use the LePage series or split off the small jumps".into(),
                    ));
                }
                let (h, _) = levy.density_forms().expect("density-backed measure");
                let cdf = tabulate_density(&*h, band.lo, band.hi, mass / 2.0)?;
                Ok(MarkSampler::Linear {
                    cdf: LinearCdfHandle(cdf),
                    mass,
                })
            }
        }
    }

    /// `ν(ℝ)`.
    pub fn mass(&self) -> f64 {
        match self {
            MarkSampler::Empty => 0.0,
            MarkSampler::Atom { mass, .. } | MarkSampler::Linear { mass, .. } => *mass,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        match self {
            MarkSampler::Empty => 0.0,
            MarkSampler::Atom { jump, .. } => sign * jump,
            MarkSampler::Linear { cdf, .. } => sign * cdf.0.sample(rng.random::<f64>()),
        }
    }
}

/// Piecewise-linear interpolant of `h` on `[lo, hi]` refined until each cell's
/// trapezoid mass agrees with Gauss-Kronrod to `MARK_TABLE_TOL` of the half mass.
fn tabulate_density(h: &dyn Fn(f64) -> f64, lo: f64, hi: f64, half_mass: f64) -> Result<LinearCdf> {
    let start = if lo > 0.0 { lo } else { 1e-12 };
    let mut end = hi;
    if !end.is_finite() {
        end = start.max(1.0) * 2.0;
        loop {
            let rest = quad::to_infinity(h, end, end, Tolerance { abs: 1e-300, rel: 1e-6 });
            if rest.value <= 1e-10 * half_mass || end > 1e300 {
                break;
            }
            end *= 4.0;
        }
    }
    if !(end > start) {
        return Err(validation("mark distribution has empty support"));
    }
    let mut nodes = Vec::new();
    let decades = (end / start).log10().max(1.0);
    let n = (decades * 32.0).ceil() as usize;
    for k in 0..=n {
        nodes.push(start * (end / start).powf(k as f64 / n as f64));
    }
    let cell_tol = MARK_TABLE_TOL * half_mass / n as f64;
    let mut segs = Vec::new();
    let mut f = |y: f64| h(y);
    fn refine(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fb: f64,
        tol: f64,
        depth: u32,
        out: &mut Vec<(f64, f64, f64, f64)>,
    ) {
        let (gk, _) = quad::gk15(&mut |x| f(x), a, b);
        let trap = 0.5 * (fa + fb) * (b - a);
        if (gk - trap).abs() <= tol || depth >= 30 {
            out.push((a, b, fa, fb));
            return;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        refine(f, a, m, fa, fm, 0.5 * tol, depth + 1, out);
        refine(f, m, b, fm, fb, 0.5 * tol, depth + 1, out);
    }
    for w in nodes.windows(2) {
        let (fa, fb) = (f(w[0]), f(w[1]));
        refine(&mut f, w[0], w[1], fa, fb, cell_tol, 0, &mut segs);
    }
    LinearCdf::from_segments(&segs)
}
