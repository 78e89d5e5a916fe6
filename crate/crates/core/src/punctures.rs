//! Punctures: the torus Green function, Seiberg bounds, the time-line moment
//! spectrum and the puncture-adjusted regularity threshold.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

use crate::error::{bail, Result};
use crate::geometry::wrap_unit;
use crate::thresholds::{background_charge, classify_r, q_critical, regularity_bar, Regime};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Puncture {
    pub position: [f64; 2],
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Torus,
    Sphere,
}

/// Mean-zero Green function of the unit square torus with
/// `-Delta G = 2 pi (delta_0 - 1)`, so `G(x) = -log |x| + O(1)`.
///
/// The double Fourier series `sum_{k != 0} cos(2 pi k.x) / (2 pi |k|^2)` is summed
/// in closed form along one axis, leaving a series in the other axis whose
/// terms decay like `exp(-2 pi k dist)`; `truncation` is its number of terms.
pub fn torus_green(x: [f64; 2], truncation: usize) -> Result<f64> {
    let a = wrap_unit(x[0]);
    let b = wrap_unit(x[1]);
    let da = a.min(1.0 - a);
    let db = b.min(1.0 - b);
    if da == 0.0 && db == 0.0 {
        bail!(Singular, "Green function is singular at the puncture");
    }
    // the coordinate inside the hyperbolic factor should be far from 0
    let (u, v) = if da >= db { (a, b) } else { (b, a) };
    // row k_v = 0: sum_{k != 0} cos(2 pi k u) / k^2 = 2 pi^2 (u^2 - u + 1/6)
    let mut acc = 2.0 * PI * PI * (u * u - u + 1.0 / 6.0);
    let s = 1.0 - 2.0 * u;
    for k in 1..=truncation {
        let kf = k as f64;
        let bb = PI * kf;
        let aa = bb * s.abs();
        let ratio = ((aa - bb).exp() + (-aa - bb).exp()) / (1.0 - (-2.0 * bb).exp());
        let term = 2.0 * (2.0 * PI * kf * v).cos() * PI / kf * ratio;
        acc += term;
        if ratio < 1e-18 {
            break;
        }
    }
    Ok(acc / (2.0 * PI))
}

/// Number of series terms that makes [`torus_green`] accurate to double precision.
pub fn green_truncation(x: [f64; 2]) -> usize {
    let a = wrap_unit(x[0]);
    let b = wrap_unit(x[1]);
    let d = a.min(1.0 - a).max(b.min(1.0 - b)).max(1e-6);
    (45.0 / (2.0 * PI * d)).ceil() as usize + 8
}

pub fn torus_green_auto(x: [f64; 2]) -> Result<f64> {
    torus_green(x, green_truncation(x))
}

/// `lim_{x -> 0} G(x) + log |x|`.
pub fn green_regular_part() -> f64 {
    let r: f64 = 1e-4;
    let p = [r / 2f64.sqrt(), r / 2f64.sqrt()];
    torus_green_auto(p).unwrap() + r.ln()
}

/// Values of `G(x_cell - x1)` at the spatial cell centers of an `n x n` lattice.
/// Within one cell of the puncture the matched asymptote
/// `-log(max(|x - x1|, dx/2)) + c0` replaces the series; those cells are flagged.
#[derive(Clone, Debug)]
pub struct GreenTable {
    pub n_space: usize,
    pub truncation: usize,
    pub values: Vec<f64>,
    pub near_singular: Vec<bool>,
}

impl GreenTable {
    pub fn new(n_space: usize, center: [f64; 2]) -> Self {
        let dx = 1.0 / n_space as f64;
        let c0 = green_regular_part();
        let mut values = Vec::with_capacity(n_space * n_space);
        let mut near = Vec::with_capacity(n_space * n_space);
        let mut trunc = 0;
        for ix in 0..n_space {
            for iy in 0..n_space {
                let p = [(ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dx];
                let d = crate::geometry::torus_distance(p, center);
                if d < dx {
                    values.push(-(d.max(dx / 2.0)).ln() + c0);
                    near.push(true);
                } else {
                    let rel = [p[0] - center[0], p[1] - center[1]];
                    let k = green_truncation(rel);
                    trunc = trunc.max(k);
                    values.push(torus_green(rel, k).unwrap());
                    near.push(false);
                }
            }
        }
        GreenTable { n_space, truncation: trunc, values, near_singular: near }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeibergReport {
    pub ok: bool,
    pub q: f64,
    pub violated: Option<String>,
}

/// Seiberg bounds: on the sphere `alpha_i < Q` for all i and `sum alpha_i > 2Q`;
/// on the torus a single puncture with `0 < alpha_1 < Q`.
pub fn seiberg_check(gamma: f64, punctures: &[Puncture], surface: Surface) -> Result<SeibergReport> {
    if !(gamma > 0.0 && gamma < 2.0) {
        bail!(InvalidParameter, "Seiberg bounds need gamma in (0, 2), got {gamma}");
    }
    let q = background_charge(gamma);
    let fail = |msg: String| Ok(SeibergReport { ok: false, q, violated: Some(msg) });
    match surface {
        Surface::Sphere => {
            if let Some(p) = punctures.iter().find(|p| !(p.alpha < q)) {
                return fail(format!("first Seiberg bound: alpha = {} is not < Q = {q}", p.alpha));
            }
            let sum: f64 = punctures.iter().map(|p| p.alpha).sum();
            if !(sum > 2.0 * q) {
                return fail(format!("second Seiberg bound: sum alpha = {sum} is not > 2Q = {}", 2.0 * q));
            }
        }
        Surface::Torus => {
            if punctures.len() != 1 {
                return fail(format!("torus bound needs exactly one puncture, got {}", punctures.len()));
            }
            let a = punctures[0].alpha;
            if !(a > 0.0 && a < q) {
                return fail(format!("torus bound: alpha_1 = {a} is not in (0, Q = {q})"));
            }
        }
    }
    Ok(SeibergReport { ok: true, q, violated: None })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimelineSpectrum {
    pub value: f64,
    /// Validity ceiling `min(8/gamma^2, sup{q : xi_R(q) = 2})`; infinite when
    /// neither bound is active. NaN if `xi_R` never reaches 2.
    pub q_star: f64,
}

/// `xi_R(q) = gamma^2/2 (q - q^2) + (4 - alpha_1 gamma) q`, the exponent of balls
/// centered on the time-line of a puncture with coupling `alpha_1`.
pub fn timeline_spectrum(gamma: f64, alpha1: f64, q: f64) -> Result<TimelineSpectrum> {
    if !(q >= 0.0) {
        bail!(Domain, "q must be >= 0, got {q}");
    }
    let value = gamma * gamma / 2.0 * (q - q * q) + (4.0 - alpha1 * gamma) * q;
    Ok(TimelineSpectrum { value, q_star: timeline_q_star(gamma, alpha1) })
}

fn timeline_q_star(gamma: f64, alpha1: f64) -> f64 {
    // a q^2 - b q + 2 = 0 with a = gamma^2/2, b = gamma^2/2 + 4 - alpha_1 gamma
    let a = gamma * gamma / 2.0;
    let b = a + 4.0 - alpha1 * gamma;
    let upper = if a == 0.0 {
        if b > 0.0 { f64::INFINITY } else { f64::NAN }
    } else {
        let disc = b * b - 8.0 * a;
        if disc < 0.0 || b <= 0.0 {
            return f64::NAN;
        }
        (b + disc.sqrt()) / (2.0 * a)
    };
    if gamma > 0.0 { upper.min(q_critical(gamma)) } else { upper }
}

/// `R(alpha_hat, gamma) = [(gamma/(2 sqrt 2) - alpha_hat gamma) ^ 0] + alpha_bar(gamma)`.
pub fn regularity_r(gamma: f64, alpha_hat: f64) -> f64 {
    let bracket = (gamma / (2.0 * 2f64.sqrt()) - alpha_hat * gamma).min(0.0);
    bracket + regularity_bar(gamma)
}

/// `beta_bar(alpha_1, gamma) = gamma^2/2 - (alpha_1 + 2) gamma + 4`.
pub fn beta_bar(alpha1: f64, gamma: f64) -> f64 {
    gamma * gamma / 2.0 - (alpha1 + 2.0) * gamma + 4.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PunctureRegularity {
    pub r_value: f64,
    pub beta_bar: f64,
    pub regime: Regime,
}

/// Convergent if `R > -1`, strong-only if `-2 < R <= -1`, out of range otherwise.
pub fn puncture_regularity(gamma: f64, alpha_hat: f64) -> Result<PunctureRegularity> {
    if !(gamma > 0.0 && gamma < 2.0) {
        bail!(InvalidParameter, "gamma must lie in (0, 2), got {gamma}");
    }
    let r = regularity_r(gamma, alpha_hat);
    Ok(PunctureRegularity { r_value: r, beta_bar: beta_bar(alpha_hat, gamma), regime: classify_r(r) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::moment_spectrum_formula;
    use crate::thresholds::gamma_1;
    use proptest::prelude::*;

    /// Independent oracle: brute-force double Fourier sum with a smooth
    /// Gaussian regulator (Richardson-free, slow, only good to ~1e-4).
    fn green_brute(x: [f64; 2]) -> f64 {
        let kmax = 400i64;
        let mut acc = 0.0;
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let kk = (k1 * k1 + k2 * k2) as f64;
                let damp = (-kk / (kmax as f64 * 0.35).powi(2)).exp();
                acc += (2.0 * PI * (k1 as f64 * x[0] + k2 as f64 * x[1])).cos() / (2.0 * PI * kk) * damp;
            }
        }
        acc
    }

    #[test]
    fn green_matches_brute_force_sum() {
        for p in [[0.3, 0.1], [0.5, 0.5], [0.2, 0.45]] {
            let g = torus_green_auto(p).unwrap();
            assert!((g - green_brute(p)).abs() < 2e-3, "{p:?} {g} {}", green_brute(p));
        }
    }

    #[test]
    fn green_truncation_stable() {
        for p in [[0.05, 0.0], [0.0354, 0.0354], [0.3, 0.7], [0.96, 0.02]] {
            let a = torus_green(p, 200).unwrap();
            let b = torus_green(p, 400).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn green_log_singularity() {
        for i in 0..20 {
            let r = 0.01 + 0.09 * i as f64 / 19.0;
            for th in [0.0, 0.4, 1.1, 2.5] {
                let p = [r * f64::cos(th), r * f64::sin(th)];
                let v = torus_green_auto(p).unwrap() + r.ln();
                assert!(v.abs() <= 2.0, "r={r} v={v}");
            }
        }
    }

    #[test]
    fn green_symmetric_and_singular() {
        let p = [0.13, 0.71];
        let a = torus_green_auto(p).unwrap();
        let b = torus_green_auto([-p[0], -p[1]]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(torus_green_auto([0.0, 1.0]).is_err());
    }

    #[test]
    fn green_laplacian_is_2pi() {
        let h = 1e-3;
        for p in [[0.3, 0.1], [0.5, 0.5], [0.2, 0.4]] {
            let g = |x: f64, y: f64| torus_green_auto([x, y]).unwrap();
            let lap = (g(p[0] + h, p[1]) + g(p[0] - h, p[1]) + g(p[0], p[1] + h) + g(p[0], p[1] - h)
                - 4.0 * g(p[0], p[1]))
                / (h * h);
            assert!((lap - 2.0 * PI).abs() < 1e-3, "{lap}");
        }
    }

    #[test]
    fn green_has_zero_mean() {
        let n = 64;
        let table = GreenTable::new(n, [0.5 / n as f64, 0.5 / n as f64]);
        // cell average excluding the singular cell is close to zero
        let m: f64 = table.values.iter().sum::<f64>() / (n * n) as f64;
        assert!(m.abs() < 0.01, "{m}");
    }

    #[test]
    fn seiberg_examples() {
        let p = |a: f64| Puncture { position: [0.0, 0.0], alpha: a };
        let ok = seiberg_check(1.0, &[p(2.0), p(2.0), p(2.0)], Surface::Sphere).unwrap();
        assert!(ok.ok && ok.q == 2.5);
        let bad = seiberg_check(1.0, &[p(1.0), p(1.0), p(1.0)], Surface::Sphere).unwrap();
        assert!(!bad.ok && bad.violated.unwrap().contains("second"));
        let q = background_charge(1.0);
        assert!(!seiberg_check(1.0, &[p(q)], Surface::Torus).unwrap().ok);
        assert!(seiberg_check(1.0, &[p(0.5)], Surface::Torus).unwrap().ok);
        assert!(seiberg_check(1.0, &[p(0.5), p(0.5)], Surface::Torus).unwrap().violated.is_some());
    }

    #[test]
    fn timeline_examples() {
        let t = timeline_spectrum(0.5, 0.5, 2.0).unwrap();
        assert!((t.value - 7.25).abs() < 1e-14);
        assert_eq!(timeline_spectrum(0.7, 0.4, 0.0).unwrap().value, 0.0);
        // q* is the upper root of xi_R(q) = 2, capped by 8/gamma^2
        let r = timeline_spectrum(0.5, 0.5, t.q_star).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9 || (t.q_star - 32.0).abs() < 1e-12);
    }

    #[test]
    fn regularity_examples() {
        let r = puncture_regularity(0.3, 0.3).unwrap();
        assert!((r.r_value - regularity_bar(0.3)).abs() < 1e-15);
        assert!((r.r_value + 0.8035).abs() < 1e-4);
        assert_eq!(r.regime, Regime::DpdConvergent);
        let g1 = gamma_1();
        assert!((regularity_r(g1, g1) + 1.0).abs() < 1e-12);
        let g2 = 2f64.sqrt() / 2.0;
        assert!((regularity_r(g2, g2) + 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn timeline_reduces_to_bulk(g in 0.0..2.0f64, q in 0.0..4.0f64) {
            prop_assert_eq!(timeline_spectrum(g, 0.0, q).unwrap().value, moment_spectrum_formula(g, q));
        }

        #[test]
        fn timeline_below_bulk(g in 0.0..2.0f64, a in 0.0..3.0f64, q in 0.0..10.0f64) {
            prop_assert!(timeline_spectrum(g, a, q).unwrap().value <= moment_spectrum_formula(g, q) + 1e-12);
        }

        #[test]
        fn r_below_alpha_bar(g in 0.001..2.0f64, a in 0.0..3.0f64) {
            let r = regularity_r(g, a);
            prop_assert!(r <= regularity_bar(g) + 1e-15);
            let active = a > 1.0 / (2.0 * 2f64.sqrt());
            prop_assert_eq!(r < regularity_bar(g), active);
        }

        #[test]
        fn beta_bar_ceiling(g in 0.0..2.0f64, a in 0.0..3.0f64) {
            prop_assert!((beta_bar(a, g) - 4.0 - (g * g / 2.0 - (a + 2.0) * g)).abs() < 1e-12);
        }
    }
}
