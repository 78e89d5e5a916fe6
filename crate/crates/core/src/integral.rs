//! Monte Carlo estimate of the singular moment integral
//! `int_{Lambda_0^N} prod_{i<j} ||w_i - w_j||_s^{-gamma^2}` over the unit
//! parabolic ball of `R x R^2`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::geometry::parabolic_ball_volume;
use crate::rng::stream;

type W = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentIntegral {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `|t|^{1/2} + |x|` on `R x R^2`.
pub fn parabolic_norm(w: &W) -> f64 {
    w[0].abs().sqrt() + (w[1] * w[1] + w[2] * w[2]).sqrt()
}

fn diff(a: &W, b: &W) -> W {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn uniform_ball(rng: &mut ChaCha8Rng) -> W {
    loop {
        let w = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if parabolic_norm(&w) < 1.0 {
            return w;
        }
    }
}

/// Radial proposal with density `g(d) = c ||d||^{-beta}` on `||d|| < reach`.
struct Radial {
    beta: f64,
    reach: f64,
    norm: f64,
}

impl Radial {
    fn new(beta: f64, reach: f64) -> Self {
        // int_{||d||<R} ||d||^{-beta} dd = (4 pi / 3) R^{4-beta} / (4 - beta)
        let norm = (4.0 - beta) * 3.0 / (4.0 * PI * reach.powf(4.0 - beta));
        Radial { beta, reach, norm }
    }

    fn density(&self, d: &W) -> f64 {
        let r = parabolic_norm(d);
        if r >= self.reach || r == 0.0 {
            return 0.0;
        }
        self.norm * r.powf(-self.beta)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> W {
        // a uniform ball point projected to the unit sphere carries the cone measure
        let u = uniform_ball(rng);
        let s = parabolic_norm(&u);
        let v: f64 = rng.random_range(0.0..1.0);
        let rho = self.reach * (1.0 - v).powf(1.0 / (4.0 - self.beta));
        let k = rho / s;
        [u[0] * k * k, u[1] * k, u[2] * k]
    }
}

fn check_args(n: usize, gamma: f64, samples: usize) -> Result<()> {
    if n < 1 {
        bail!(InvalidParameter, "n must be >= 1");
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        bail!(InvalidParameter, "gamma must be finite and >= 0, got {gamma}");
    }
    if samples < 2 {
        bail!(InvalidParameter, "need at least 2 samples");
    }
    Ok(())
}

/// Importance-sampled estimate. The points are drawn sequentially; each new
/// point is uniform in the ball with probability 1/2 and otherwise placed
/// around a uniformly chosen earlier point with a radial density
/// `~ ||d||^{-beta}`, `beta = min(gamma^2, 3.5)`. The weight divides by the
/// full mixture density so the estimator is unbiased.
///
/// Returns a `Divergent` error when `n >= 8 / gamma^2`.
pub fn appendix_moment_integral(n: usize, gamma: f64, samples: usize, seed: u64) -> Result<MomentIntegral> {
    check_args(n, gamma, samples)?;
    let g2 = gamma * gamma;
    if n >= 2 && n as f64 * g2 >= 8.0 {
        bail!(
            Divergent,
            "moment integral diverges for n = {n} >= 8/gamma^2 = {:.4}",
            8.0 / g2
        );
    }
    Ok(estimate(n, g2, None, samples, seed))
}

/// Same estimator with the integrand capped at `delta^{-gamma^2}` per pair
/// (`||w_i - w_j||` replaced by `max(||w_i - w_j||, delta)`). Finite for every
/// `gamma`; as `delta -> 0` it converges when `n < 8/gamma^2` and blows up
/// like `delta^{4 - gamma^2}` for `n = 2` beyond the threshold.
pub fn truncated_moment_integral(
    n: usize,
    gamma: f64,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<MomentIntegral> {
    check_args(n, gamma, samples)?;
    if !(delta > 0.0) {
        bail!(InvalidParameter, "delta must be positive");
    }
    Ok(estimate(n, gamma * gamma, Some(delta), samples, seed))
}

fn estimate(n: usize, g2: f64, floor: Option<f64>, samples: usize, seed: u64) -> MomentIntegral {
    let vol = parabolic_ball_volume(1.0);
    if g2 == 0.0 || n == 1 {
        return MomentIntegral { estimate: vol.powi(n as i32), stderr: 0.0, samples };
    }
    let prop = Radial::new(g2.min(3.5), 2.0);
    let mut rng = stream(seed, 0x4150_5045_4e44);
    let mut pts: Vec<W> = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(samples);
    for _ in 0..samples {
        pts.clear();
        pts.push(uniform_ball(&mut rng));
        let mut q = 1.0 / vol;
        let mut inside = true;
        for k in 1..n {
            let w = if rng.random_bool(0.5) {
                uniform_ball(&mut rng)
            } else {
                let j = rng.random_range(0..k);
                let d = prop.sample(&mut rng);
                [pts[j][0] + d[0], pts[j][1] + d[1], pts[j][2] + d[2]]
            };
            let in_ball = parabolic_norm(&w) < 1.0;
            let mut mix = 0.0;
            for p in &pts {
                mix += prop.density(&diff(&w, p));
            }
            let qk = 0.5 * if in_ball { 1.0 / vol } else { 0.0 } + 0.5 * mix / k as f64;
            q *= qk;
            inside &= in_ball;
            pts.push(w);
        }
        if !inside {
            weights.push(0.0);
            continue;
        }
        let mut f = 1.0;
        for i in 0..n {
            for j in 0..i {
                let mut d = parabolic_norm(&diff(&pts[i], &pts[j]));
                if let Some(delta) = floor {
                    d = d.max(delta);
                }
                f *= d.powf(-g2);
            }
        }
        weights.push(f / q);
    }
    let (m, se) = crate::stats::mean_stderr(&weights);
    MomentIntegral { estimate: m, stderr: se, samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_is_volume_power() {
        for n in 1..5 {
            let r = appendix_moment_integral(n, 0.0, 10, 1).unwrap();
            assert_eq!(r.estimate, (PI / 3.0).powi(n as i32));
        }
    }

    #[test]
    fn divergence_flag() {
        assert!(appendix_moment_integral(2, 2.9, 100, 1).unwrap_err().is_validation());
        assert!(appendix_moment_integral(2, 1.9, 100, 1).is_ok());
        assert!(appendix_moment_integral(4, 1.5, 100, 1).is_err());
        assert!(appendix_moment_integral(3, 1.5, 100, 1).is_ok());
    }

    #[test]
    fn radial_density_integrates_to_one() {
        // E_uniform[g(d)] * vol(B_2) = int g = 1
        let p = Radial::new(2.0, 2.0);
        let mut rng = stream(3, 0);
        let m = 200_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let u = uniform_ball(&mut rng);
            acc += p.density(&[4.0 * u[0], 2.0 * u[1], 2.0 * u[2]]);
        }
        let est = acc / m as f64 * parabolic_ball_volume(2.0);
        assert!((est - 1.0).abs() < 0.03, "{est}");
    }

    #[test]
    fn radial_samples_follow_power_law() {
        // P(||d|| < R/2) = 2^{-(4-beta)}
        let p = Radial::new(3.0, 2.0);
        let mut rng = stream(4, 0);
        let m = 100_000;
        let hits = (0..m).filter(|_| parabolic_norm(&p.sample(&mut rng)) < 1.0).count();
        assert!((hits as f64 / m as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn truncation_monotone_in_delta() {
        let a = truncated_moment_integral(2, 2.9, 0.1, 20_000, 5).unwrap();
        let b = truncated_moment_integral(2, 2.9, 0.01, 20_000, 5).unwrap();
        assert!(b.estimate > 3.0 * a.estimate);
    }
}
