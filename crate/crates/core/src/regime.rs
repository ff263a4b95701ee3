//! Grid-based classification of a Lévy basis into one of the four limit regimes.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::levy::{LevyBasisSpec, LevyExponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// Dependent-increment stable limit, `alpha > 1 + gamma`.
    Thm1,
    /// `(1 + gamma)`-stable Lévy limit.
    Thm2,
    /// `alpha`-stable Lévy limit, `alpha < 1 + gamma`.
    Thm3,
    /// Stable base with `alpha = 1 + gamma`.
    Critical,
    Unclassified,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Thm1 => "THM1",
            Regime::Thm2 => "THM2",
            Regime::Thm3 => "THM3",
            Regime::Critical => "CRITICAL",
            Regime::Unclassified => "UNCLASSIFIED",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "THM1" => Ok(Regime::Thm1),
            "THM2" => Ok(Regime::Thm2),
            "THM3" => Ok(Regime::Thm3),
            "CRITICAL" => Ok(Regime::Critical),
            other => Err(validation(format!("unknown regime {other:?}"))),
        }
    }
}

/// `F_T = T^power (log T)^log_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norming {
    pub power: f64,
    pub log_power: f64,
}

impl Norming {
    pub fn power(power: f64) -> Self {
        Self { power, log_power: 0.0 }
    }

    /// Norming for which the critical exponent has a finite positive limit,
    /// `F_T^alpha = T log T`.
    pub fn critical(alpha: f64) -> Self {
        Self {
            power: 1.0 / alpha,
            log_power: 1.0 / alpha,
        }
    }

    /// The critical norming `T^{1/alpha} log T` as usually displayed. With it the
    /// exponent decays like `(log T)^{1 - alpha}`.
    pub fn critical_displayed(alpha: f64) -> Self {
        Self {
            power: 1.0 / alpha,
            log_power: 1.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut f = t.powf(self.power);
        if self.log_power != 0.0 {
            f *= t.ln().powf(self.log_power);
        }
        f
    }

    pub fn describe(&self) -> String {
        if self.log_power == 0.0 {
            format!("T^{:.6}", self.power)
        } else {
            format!("T^{:.6} (log T)^{:.6}", self.power, self.log_power)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeEvidence {
    /// Slope of `log psi` (running-max envelope) over the large-theta grid.
    pub alpha_at_infinity_est: f64,
    /// Slope of `log psi` over the small-theta grid.
    pub alpha_at_zero_est: f64,
    pub tail_moment_kappa: f64,
    pub tail_moment_finite: bool,
    pub large_grid: Vec<(f64, f64)>,
    pub small_grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub gamma: f64,
    /// Index entering the norming (`alpha` of the relevant hypothesis).
    pub alpha: Option<f64>,
    /// Stability index of the limit law.
    pub beta: Option<f64>,
    pub norming: Option<Norming>,
    /// Self-similarity index `1 - gamma/alpha` of the dependent-increment limit.
    pub hurst: Option<f64>,
    pub evidence: RegimeEvidence,
    pub notes: Vec<String>,
}

const EPS: f64 = 0.02;

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0.ln(), a.1 + p.1.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in points {
        let dx = p.0.ln() - mx;
        sxy += dx * (p.1.ln() - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn grid(lo_exp: f64, hi_exp: f64) -> Vec<f64> {
    let n = ((hi_exp - lo_exp) * 4.0).round() as usize;
    (0..=n)
        .map(|k| 10f64.powf(lo_exp + k as f64 * (hi_exp - lo_exp) / n as f64))
        .collect()
}

/// Checks the hypotheses of the four limit theorems on log-spaced grids and
/// reports which applies. Ambiguous cases come back as `Unclassified`.
pub fn verify_hypotheses(spec: &LevyBasisSpec, gamma: f64) -> Result<RegimeReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(validation(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let psi = LevyExponent::new(spec.clone());
    let threshold = 1.0 + gamma;
    let mut notes = Vec::new();

    let mut large = Vec::new();
    let mut envelope: f64 = 0.0;
    for th in grid(3.0, 6.0) {
        envelope = envelope.max(psi.psi(th)?);
        large.push((th, envelope));
    }
    let mut small = Vec::new();
    for th in grid(-6.0, -3.0) {
        small.push((th, psi.psi(th)?));
    }
    if large.iter().chain(&small).any(|p| !(p.1 > 0.0)) {
        notes.push("psi vanishes on the test grid".into());
        return Ok(unclassified(gamma, large, small, 0.0, 0.0, threshold, false, notes));
    }
    let a_inf = slope(&large);
    let a_zero = slope(&small);

    let stable = psi.pure_stable();
    let eps = if stable.is_some() { 1e-9 } else { EPS };

    for (declared, est, name) in [
        (spec.alpha_at_infinity, a_inf, "alpha_at_infinity"),
        (spec.alpha_at_zero, a_zero, "alpha_at_zero"),
    ] {
        if let Some(d) = declared {
            if (d - est).abs() > 0.05 {
                notes.push(format!("declared {name} = {d} disagrees with grid estimate {est:.4}"));
            }
        }
    }

    let kappa = spec.moment_kappa.unwrap_or(threshold + EPS);
    let (_, tail) = psi.split(1.0)?;
    let tail_finite = match tail.abs_moment(kappa) {
        Ok(v) => v.is_finite(),
        Err(Error::Accuracy { .. }) => false,
        Err(e) => return Err(e),
    };

    if !notes.is_empty() {
        return Ok(unclassified(
            gamma,
            large,
            small,
            a_inf,
            a_zero,
            kappa,
            tail_finite,
            notes,
        ));
    }

    let evidence = RegimeEvidence {
        alpha_at_infinity_est: a_inf,
        alpha_at_zero_est: a_zero,
        tail_moment_kappa: kappa,
        tail_moment_finite: tail_finite,
        large_grid: large,
        small_grid: small,
    };

    if let Some(alpha) = stable {
        if (alpha - threshold).abs() <= 1e-9 {
            return Ok(RegimeReport {
                regime: Regime::Critical,
                gamma,
                alpha: Some(alpha),
                beta: Some(alpha),
                norming: Some(Norming::critical(alpha)),
                hurst: None,
                evidence,
                notes,
            });
        }
    }
    let pick = |est: f64, declared: Option<f64>| stable.or(declared).unwrap_or(est);

    if a_inf > threshold + eps && tail_finite && kappa > threshold {
        let alpha = pick(a_inf, spec.alpha_at_infinity);
        return Ok(RegimeReport {
            regime: Regime::Thm1,
            gamma,
            alpha: Some(alpha),
            beta: Some(alpha),
            norming: Some(Norming::power((alpha - gamma) / alpha)),
            hurst: Some(1.0 - gamma / alpha),
            evidence,
            notes,
        });
    }
    if a_zero > threshold + eps && a_inf < threshold - eps {
        return Ok(RegimeReport {
            regime: Regime::Thm2,
            gamma,
            alpha: None,
            beta: Some(threshold),
            norming: Some(Norming::power(1.0 / threshold)),
            hurst: None,
            evidence,
            notes,
        });
    }
    if a_zero > 0.0 && a_zero < threshold - eps && a_inf < threshold - eps {
        let alpha = pick(a_zero, spec.alpha_at_zero);
        return Ok(RegimeReport {
            regime: Regime::Thm3,
            gamma,
            alpha: Some(alpha),
            beta: Some(alpha),
            norming: Some(Norming::power(1.0 / alpha)),
            hurst: None,
            evidence,
            notes,
        });
    }
    let mut notes = evidence_notes(a_inf, a_zero, threshold);
    notes.push("no limit theorem's hypotheses hold on the test grid".into());
    Ok(RegimeReport {
        regime: Regime::Unclassified,
        gamma,
        alpha: None,
        beta: None,
        norming: None,
        hurst: None,
        evidence,
        notes,
    })
}

fn evidence_notes(a_inf: f64, a_zero: f64, threshold: f64) -> Vec<String> {
    vec![format!(
        "slopes: at infinity {a_inf:.4}, at zero {a_zero:.4}, threshold 1+gamma = {threshold:.4}"
    )]
}

#[allow(clippy::too_many_arguments)]
fn unclassified(
    gamma: f64,
    large: Vec<(f64, f64)>,
    small: Vec<(f64, f64)>,
    a_inf: f64,
    a_zero: f64,
    kappa: f64,
    tail_finite: bool,
    notes: Vec<String>,
) -> RegimeReport {
    RegimeReport {
        regime: Regime::Unclassified,
        gamma,
        alpha: None,
        beta: None,
        norming: None,
        hurst: None,
        evidence: RegimeEvidence {
            alpha_at_infinity_est: a_inf,
            alpha_at_zero_est: a_zero,
            tail_moment_kappa: kappa,
            tail_moment_finite: tail_finite,
            large_grid: large,
            small_grid: small,
        },
        notes,
    }
}
