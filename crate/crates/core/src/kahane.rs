//! Monte Carlo rig for Kahane's convexity inequality:
//! if `Cov X <= Cov Y` entrywise then
//! `E F(sum p_i e^{X_i - E X_i^2 / 2}) <= E F(sum p_i e^{Y_i - E Y_i^2 / 2})`
//! for convex `F` of at most polynomial growth.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{bail, Result};
use crate::rng::stream;

/// Symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub a: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            bail!(InvalidParameter, "matrix needs {} entries, got {}", n * n, a.len());
        }
        for i in 0..n {
            for j in 0..i {
                if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 * (1.0 + a[i * n + j].abs()) {
                    bail!(InvalidParameter, "matrix is not symmetric at ({i}, {j})");
                }
            }
        }
        Ok(SymMatrix { n, a })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Lower factor `L` with `L L^T = self`; zero pivots are allowed so
    /// singular positive semidefinite matrices factor too.
    pub fn cholesky(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max).max(1e-300);
        let tol = 1e-10 * scale;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d < -tol {
                bail!(InvalidParameter, "covariance is not positive semidefinite (pivot {d} at {j})");
            }
            let djj = d.max(0.0).sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = if djj > tol.sqrt() * 1e-3 { s / djj } else {
                    if s.abs() > 1e-8 * scale {
                        bail!(InvalidParameter, "covariance is not positive semidefinite");
                    }
                    0.0
                };
            }
        }
        Ok(l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConvexF {
    Power(f64),
    Exp,
}

impl ConvexF {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            ConvexF::Power(p) => x.powf(p),
            ConvexF::Exp => x.exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KahaneReport {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// Standard error of `rhs - lhs` from the paired samples.
    pub diff_stderr: f64,
    /// `(lhs - rhs) / diff_stderr`; positive values point against the inequality.
    pub z: f64,
    pub violation: bool,
}

/// Estimates both sides with common random numbers (`X = L_a Z`, `Y = L_b Z`)
/// and flags a violation only beyond 4 standard errors of the difference.
pub fn kahane_check(
    cov_a: &SymMatrix,
    cov_b: &SymMatrix,
    weights: &[f64],
    f: ConvexF,
    replicas: usize,
    seed: u64,
) -> Result<KahaneReport> {
    let n = cov_a.n;
    if cov_b.n != n || weights.len() != n {
        bail!(InvalidParameter, "dimension mismatch");
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        bail!(InvalidParameter, "weights must be nonnegative");
    }
    if let ConvexF::Power(p) = f {
        if !(p >= 1.0) {
            bail!(InvalidParameter, "power must be >= 1, got {p}");
        }
    }
    for i in 0..n * n {
        if cov_a.a[i] > cov_b.a[i] + 1e-12 {
            bail!(InvalidParameter, "entrywise ordering cov_a <= cov_b violated at entry {i}");
        }
    }
    if replicas < 2 {
        bail!(InvalidParameter, "need at least 2 replicas");
    }
    let la = cov_a.cholesky()?;
    let lb = cov_b.cholesky()?;
    let mut rng = stream(seed, 0x4b41_4841_4e45);
    let mut z = vec![0.0; n];
    let (mut sa, mut sa2, mut sb, mut sb2, mut sd2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    // compensated running sums keep 1e6-term accumulations accurate
    let mut ca = [0.0f64; 5];
    for _ in 0..replicas {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut xa = 0.0;
        let mut xb = 0.0;
        for i in 0..n {
            let mut ya = 0.0;
            let mut yb = 0.0;
            for k in 0..=i {
                ya += la[i * n + k] * z[k];
                yb += lb[i * n + k] * z[k];
            }
            xa += weights[i] * (ya - 0.5 * cov_a.get(i, i)).exp();
            xb += weights[i] * (yb - 0.5 * cov_b.get(i, i)).exp();
        }
        let fa = f.eval(xa);
        let fb = f.eval(xb);
        kahan(&mut sa, &mut ca[0], fa);
        kahan(&mut sa2, &mut ca[1], fa * fa);
        kahan(&mut sb, &mut ca[2], fb);
        kahan(&mut sb2, &mut ca[3], fb * fb);
        kahan(&mut sd2, &mut ca[4], (fb - fa) * (fb - fa));
    }
    let m = replicas as f64;
    let (ma, mb) = (sa / m, sb / m);
    let var = |s2: f64, mu: f64| ((s2 / m - mu * mu) * m / (m - 1.0)).max(0.0);
    let lhs_stderr = (var(sa2, ma) / m).sqrt();
    let rhs_stderr = (var(sb2, mb) / m).sqrt();
    let diff_stderr = (var(sd2, mb - ma) / m).sqrt();
    let zscore = if diff_stderr > 0.0 { (ma - mb) / diff_stderr } else { 0.0 };
    Ok(KahaneReport {
        lhs: ma,
        lhs_stderr,
        rhs: mb,
        rhs_stderr,
        diff_stderr,
        z: zscore,
        violation: zscore > 4.0,
    })
}

fn kahan(sum: &mut f64, comp: &mut f64, x: f64) {
    let y = x - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// A random pair `cov_a <= cov_b` (entrywise, both PSD) plus weights:
/// `cov_b = cov_a + sum_m c_m u_m u_m^T` with nonnegative `u_m`.
pub fn random_nested_covariances(n: usize, seed: u64) -> (SymMatrix, SymMatrix, Vec<f64>) {
    let mut rng = stream(seed, 0x4e45_5354);
    let mut g = vec![0.0; n * n];
    for v in g.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += g[i * n + k] * g[j * n + k];
            }
            a[i * n + j] = 0.6 * s / n as f64;
        }
    }
    let mut b = a.clone();
    for _ in 0..3 {
        let c: f64 = rng.random_range(0.05..0.4);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] += c * u[i] * u[j];
            }
        }
    }
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    (SymMatrix { n, a }, SymMatrix { n, a: b }, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_covariances_agree() {
        let (a, _, w) = random_nested_covariances(4, 3);
        let r = kahane_check(&a, &a, &w, ConvexF::Power(2.0), 20_000, 1).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert!(!r.violation);
    }

    #[test]
    fn two_point_second_moment_closed_form() {
        // E[(sum p_i e^{X_i - C_ii/2})^2] = sum_ij p_i p_j e^{C_ij}
        let ca = SymMatrix::new(2, vec![0.5, 0.1, 0.1, 0.3]).unwrap();
        let s2 = 0.4;
        let cb = SymMatrix::new(2, ca.a.iter().map(|v| v + s2).collect()).unwrap();
        let p = [0.7, 0.4];
        let exact = |c: &SymMatrix| {
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    acc += p[i] * p[j] * c.get(i, j).exp();
                }
            }
            acc
        };
        let r = kahane_check(&ca, &cb, &p, ConvexF::Power(2.0), 400_000, 9).unwrap();
        assert!((r.lhs - exact(&ca)).abs() < 4.0 * r.lhs_stderr);
        assert!((r.rhs - exact(&cb)).abs() < 4.0 * r.rhs_stderr);
        assert!((exact(&cb) / exact(&ca) - s2.exp()).abs() < 1e-12);
        assert!(r.rhs > r.lhs && !r.violation);
    }

    #[test]
    fn ordering_precondition() {
        let (a, b, w) = random_nested_covariances(3, 5);
        assert!(kahane_check(&b, &a, &w, ConvexF::Exp, 100, 0).is_err());
    }

    #[test]
    fn nested_pairs_are_psd_and_ordered() {
        for s in 0..20 {
            let (a, b, _) = random_nested_covariances(5, s);
            assert!(a.cholesky().is_ok() && b.cholesky().is_ok());
            assert!(a.a.iter().zip(&b.a).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn singular_psd_factors() {
        let ones = SymMatrix::new(3, vec![1.0; 9]).unwrap();
        let l = ones.cholesky().unwrap();
        assert!((l[0] - 1.0).abs() < 1e-15 && (l[3] - 1.0).abs() < 1e-15);
    }
}
