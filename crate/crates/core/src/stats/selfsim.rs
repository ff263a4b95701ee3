//! Self-similarity index from marginals at geometrically related times.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{adaptive_window, check_sample, ecf_point, least_squares, IndexFit};
use crate::error::{validation, Error, Result};

/// Resolution of the exponent grid `s = k / 1000` on `[0, 2]`.
pub const SELFSIM_S_STEP: f64 = 1e-3;
const S_STEPS: usize = 2000;
const TARGET_THETAS: f64 = 16.0;

/// Best `s` with `Y(ct) ≈ c^s Y(t)` in law, scanning every grid value of `s`.
///
/// `θ` runs over a lattice of ratio `c^{m/1000}`, so `c^s θ_k` lands on the
/// same lattice and each ECF is evaluated once.
fn matched_exponent(base: &[f64], target: &[f64], c: f64) -> Result<(f64, (f64, f64))> {
    let (lo, hi) = adaptive_window(target)?;
    let delta = c.ln() * SELFSIM_S_STEP;
    let span = (hi / lo).ln();
    let m = ((span / (TARGET_THETAS * delta)).ceil() as usize).max(1);
    let k_count = ((span / (m as f64 * delta)).floor() as usize + 1).max(4);
    let lattice = (k_count - 1) * m + S_STEPS + 1;
    let at = |j: usize| lo * (j as f64 * delta).exp();

    let tgt: Vec<(Complex64, f64)> = (0..k_count)
        .into_par_iter()
        .map(|k| ecf_point(target, at(k * m)))
        .collect();
    let src: Vec<(Complex64, f64)> = (0..lattice).into_par_iter().map(|j| ecf_point(base, at(j))).collect();

    let distance = |j: usize| -> f64 {
        tgt.iter()
            .enumerate()
            .map(|(k, (v, se))| {
                let (w, sw) = src[k * m + j];
                let var = (se * se + sw * sw).max(f64::MIN_POSITIVE);
                (v - w).norm_sqr() / var
            })
            .sum()
    };
    let mut best = (0, f64::INFINITY);
    for j in 0..=S_STEPS {
        let d = distance(j);
        if d < best.1 {
            best = (j, d);
        }
    }
    if best.0 == 0 || best.0 == S_STEPS {
        return Err(Error::Window {
            message: format!(
                "ECFs at scale {c} do not overlap for any s in (0, 2); best match at the boundary s = {}",
                best.0 as f64 * SELFSIM_S_STEP
            ),
            suggested: Some((lo, hi)),
        });
    }
    Ok((best.0 as f64 * SELFSIM_S_STEP, (lo, hi)))
}

/// `marginals[i] = (t_i, sample of Y(t_i))` with `t_0` the base time; the
/// scales are `c_i = t_i / t_0`. Regresses `log c^{s(c)}` on `log c`.
pub fn selfsim_index_fit(marginals: &[(f64, &[f64])]) -> Result<IndexFit> {
    if marginals.len() < 3 {
        return Err(validation(format!("need at least 3 scales, got {}", marginals.len())));
    }
    let t0 = marginals[0].0;
    if !(t0 > 0.0) || marginals.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(validation("times must be positive and strictly increasing"));
    }
    for (_, s) in marginals {
        check_sample(s)?;
    }
    let base = marginals[0].1;
    let mut x = vec![0.0];
    let mut y = vec![0.0];
    let mut window = None;
    for (t, sample) in &marginals[1..] {
        let c = t / t0;
        let (s, w) = matched_exponent(base, sample, c)?;
        window.get_or_insert(w);
        x.push(c.ln());
        y.push(s * c.ln());
    }
    let (slope, intercept, r_squared) = least_squares(&x, &y);
    Ok(IndexFit {
        index_hat: slope,
        intercept,
        r_squared,
        theta_window: window.unwrap(),
        n_points: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::{path_rng, sample_symmetric_stable, simulate_stable_levy};

    #[test]
    fn constructed_self_similarity_is_exact() {
        let mut rng = path_rng(8, 0);
        let x: Vec<f64> = (0..4000).map(|_| sample_symmetric_stable(1.7, &mut rng)).collect();
        for h in [0.75, 0.5, 1.2] {
            let s2: Vec<f64> = x.iter().map(|v| 2f64.powf(h) * v).collect();
            let s4: Vec<f64> = x.iter().map(|v| 4f64.powf(h) * v).collect();
            let fit = selfsim_index_fit(&[(1.0, &x), (2.0, &s2), (4.0, &s4)]).unwrap();
            assert!((fit.index_hat - h).abs() < 1e-12, "{h}: {fit:?}");
        }
    }

    #[test]
    fn stable_levy_index() {
        let e = simulate_stable_levy(&[1.0, 2.0, 4.0], 1.2, 20_000, 4, "").unwrap();
        let m: Vec<Vec<f64>> = [1.0, 2.0, 4.0].iter().map(|&t| e.marginal(t).unwrap()).collect();
        let fit = selfsim_index_fit(&[(1.0, &m[0]), (2.0, &m[1]), (4.0, &m[2])]).unwrap();
        assert!((fit.index_hat - 1.0 / 1.2).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let x = vec![1.0; 200];
        assert!(selfsim_index_fit(&[(1.0, &x), (2.0, &x)]).is_err());
        assert!(selfsim_index_fit(&[(1.0, &x), (1.0, &x), (2.0, &x)]).is_err());
        let mut rng = path_rng(1, 0);
        let a: Vec<f64> = (0..2000).map(|_| sample_symmetric_stable(1.5, &mut rng)).collect();
        let far: Vec<f64> = a.iter().map(|v| v * 1e4).collect();
        assert!(matches!(
            selfsim_index_fit(&[(1.0, &a), (2.0, &far), (4.0, &far)]),
            Err(Error::Window { .. })
        ));
    }
}
