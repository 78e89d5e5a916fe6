//! Small statistics toolkit with deterministic reduction order.

use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{bail, Result};

/// Pairwise (tree) summation. The association order depends only on the
/// length, so results do not depend on how the values were produced.
pub fn tree_sum(v: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if v.len() <= LEAF {
        let mut acc = 0.0;
        for x in v {
            acc += x;
        }
        return acc;
    }
    let mid = v.len() / 2;
    tree_sum(&v[..mid]) + tree_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    tree_sum(v) / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    tree_sum(&sq) / (v.len() - 1) as f64
}

/// `(mean, standard error of the mean)`.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    (mean(v), (variance(v) / v.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals.
    pub residual: f64,
    /// Standard error of the slope (NaN with two points).
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        bail!(InvalidParameter, "fit needs equal lengths, got {} and {}", x.len(), y.len());
    }
    if n < 2 {
        bail!(Fit, "need at least 2 points, got {n}");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        bail!(Fit, "non-finite value in fit input");
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 {
        bail!(Fit, "degenerate abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for i in 0..n {
        let r = y[i] - slope * x[i] - intercept;
        ss += r * r;
    }
    let slope_stderr = if n > 2 { (ss / (n - 2) as f64 / sxx).sqrt() } else { f64::NAN };
    Ok(LineFit { slope, intercept, residual: (ss / n as f64).sqrt(), slope_stderr })
}

/// Minimal xorshift used for bootstrap resampling indices.
#[derive(Clone, Debug)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        crate::rng::mix64(self.0)
    }
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Bootstrap standard deviation of a statistic of the rows.
pub fn bootstrap_stderr<T>(rows: &[T], resamples: usize, seed: u64, stat: impl Fn(&[&T]) -> f64) -> f64 {
    let n = rows.len();
    if n < 2 || resamples < 2 {
        return f64::NAN;
    }
    let mut rng = SplitMix64(seed);
    let mut vals = Vec::with_capacity(resamples);
    let mut pick: Vec<&T> = Vec::with_capacity(n);
    for _ in 0..resamples {
        pick.clear();
        for _ in 0..n {
            pick.push(&rows[rng.below(n)]);
        }
        vals.push(stat(&pick));
    }
    variance(&vals).sqrt()
}

/// Kish effective sample size of nonnegative weights.
pub fn effective_sample_size(w: &[f64]) -> f64 {
    let s = tree_sum(w);
    let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
    let s2 = tree_sum(&sq);
    if s2 <= 0.0 {
        return 0.0;
    }
    s * s / s2
}
