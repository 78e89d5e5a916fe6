//! The round sphere in normal coordinates `(r, theta)` around the north pole:
//! Green function, Laplace-Beltrami operator, heat kernels and the covariance
//! of the linear solution.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

use crate::error::{bail, Result};
use crate::quad::GaussRule;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint {
    pub r: f64,
    pub theta: f64,
}

impl SpherePoint {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&r) {
            bail!(InvalidParameter, "r = {r} outside [0, pi]");
        }
        let th = theta.rem_euclid(2.0 * PI);
        Ok(SpherePoint { r, theta: th })
    }
}

/// Geodesic distance by the spherical law of cosines.
pub fn sphere_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    let c = p.r.cos() * q.r.cos() + p.r.sin() * q.r.sin() * (p.theta - q.theta).cos();
    c.clamp(-1.0, 1.0).acos()
}

/// `|r e^{i theta} - r' e^{i theta'}|`, the distance of the preimages in the tangent plane.
pub fn polar_chord(p: &SpherePoint, q: &SpherePoint) -> f64 {
    (p.r * p.r + q.r * q.r - 2.0 * p.r * q.r * (p.theta - q.theta).cos()).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionReport {
    pub pairs: usize,
    /// Smallest `C` making the lower bound hold on every pair.
    pub c_fit: f64,
    pub upper_violations: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl DistortionReport {
    pub fn ok(&self) -> bool {
        self.upper_violations == 0 && self.c_fit <= 1.0
    }
}

/// Checks `(1 - C r^2)(1 - C r'^2) |polar chord| <= d_S2 <= |polar chord|`.
pub fn distortion_check(pairs: &[(SpherePoint, SpherePoint)]) -> Result<DistortionReport> {
    let mut c_fit: f64 = 0.0;
    let mut viol = 0;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for (p, q) in pairs {
        if p.r > PI / 3.0 || q.r > PI / 3.0 {
            bail!(Domain, "distortion lemma needs r, r' <= pi/3");
        }
        let e = polar_chord(p, q);
        let d = sphere_distance(p, q);
        if e == 0.0 {
            continue;
        }
        let rho = d / e;
        if d > e * (1.0 + 1e-12) + 1e-15 {
            viol += 1;
        }
        min_ratio = min_ratio.min(rho);
        max_ratio = max_ratio.max(rho);
        if rho < 1.0 {
            let a = p.r * p.r;
            let b = q.r * q.r;
            let s = a + b;
            let c = 2.0 * (1.0 - rho) / (s + (s * s - 4.0 * a * b * (1.0 - rho)).max(0.0).sqrt());
            c_fit = c_fit.max(c);
        }
    }
    Ok(DistortionReport { pairs: pairs.len(), c_fit, upper_violations: viol, min_ratio, max_ratio })
}

/// `G(r) = log(1 / (2 sin(r/2)))`, with `-Delta G = 2 pi (delta - 1/(4 pi))`.
pub fn sphere_green(r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= PI) {
        if r == 0.0 {
            bail!(Singular, "sphere Green function is singular at r = 0");
        }
        bail!(Domain, "r = {r} outside (0, pi]");
    }
    Ok(-(2.0 * (r / 2.0).sin()).ln())
}

/// Polar grid on the cap `r <= r_max`: rings `r_i = i h`, `i = 0..=n_r`, with
/// `n_theta` equally spaced angles on each ring (ring 0 is the pole).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_max: f64,
}

impl SphereGrid {
    pub fn new(n_r: usize, n_theta: usize, r_max: f64) -> Result<Self> {
        if n_r < 3 || n_theta < 4 {
            bail!(InvalidParameter, "sphere grid too small: {n_r} x {n_theta}");
        }
        if !(r_max > 0.0 && r_max <= PI / 3.0 + 1e-12) {
            bail!(Domain, "cap limit {r_max} must lie in (0, pi/3]");
        }
        Ok(SphereGrid { n_r, n_theta, r_max })
    }

    pub fn h(&self) -> f64 {
        self.r_max / self.n_r as f64
    }

    pub fn h_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn point(&self, i: usize, j: usize) -> SpherePoint {
        SpherePoint { r: i as f64 * self.h(), theta: j as f64 * self.h_theta() }
    }

    /// Samples `f` on all rings, `(n_r + 1) * n_theta` values.
    pub fn sample(&self, f: impl Fn(SpherePoint) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.n_r + 1) * self.n_theta);
        for i in 0..=self.n_r {
            for j in 0..self.n_theta {
                out.push(f(self.point(i, j)));
            }
        }
        out
    }
}

/// Second-order discretization of
/// `(1/sin r) d/dr (sin r df/dr) + (1/sin^2 r) d^2f/dtheta^2`.
/// Returns rings `0..n_r` (the outer ring has no outer neighbour). At the pole
/// the operator is `4 (mean of ring 1 - f(pole)) / h^2`.
pub fn laplace_beltrami(grid: &SphereGrid, f: &[f64]) -> Result<Vec<f64>> {
    let nt = grid.n_theta;
    if f.len() != (grid.n_r + 1) * nt {
        bail!(InvalidParameter, "expected {} samples, got {}", (grid.n_r + 1) * nt, f.len());
    }
    let h = grid.h();
    let ht = grid.h_theta();
    let mut out = vec![0.0; grid.n_r * nt];
    let ring1: f64 = f[nt..2 * nt].iter().sum::<f64>() / nt as f64;
    let pole = 4.0 * (ring1 - f[0]) / (h * h);
    for v in out.iter_mut().take(nt) {
        *v = pole;
    }
    for i in 1..grid.n_r {
        let r = i as f64 * h;
        let sp = (r + h / 2.0).sin();
        let sm = (r - h / 2.0).sin();
        let s = r.sin();
        for j in 0..nt {
            let c = f[i * nt + j];
            let up = f[(i + 1) * nt + j];
            let dn = f[(i - 1) * nt + j];
            let lt = f[i * nt + (j + nt - 1) % nt];
            let rt = f[i * nt + (j + 1) % nt];
            let radial = (sp * (up - c) - sm * (c - dn)) / (s * h * h);
            let angular = (lt - 2.0 * c + rt) / (s * s * ht * ht);
            out[i * nt + j] = radial + angular;
        }
    }
    Ok(out)
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Smallest `l_max` accepted by [`sphere_heat_kernel_series`] at time `t`.
pub fn series_l_max(t: f64) -> usize {
    let mut l = ((80.0 / t).sqrt()).ceil() as usize;
    while (l * (l + 1)) as f64 * t / 2.0 < 40.0 {
        l += 1;
    }
    l
}

/// Heat kernel of `d/dt = Delta/2` on the unit sphere:
/// `sum_{l <= l_max} (2l+1)/(4 pi) exp(-l(l+1)t/2) P_l(cos r)`.
pub fn sphere_heat_kernel_series(t: f64, r: f64, l_max: usize) -> Result<f64> {
    if !(t > 0.0) {
        bail!(InvalidParameter, "t must be positive, got {t}");
    }
    if ((l_max * (l_max + 1)) as f64) * t / 2.0 < 40.0 {
        bail!(InvalidParameter, "series truncated too early: l_max = {l_max} at t = {t}");
    }
    let x = r.cos();
    let (mut p0, mut p1) = (1.0, x);
    let mut acc = 1.0 / (4.0 * PI);
    if l_max >= 1 {
        acc += 3.0 / (4.0 * PI) * (-t).exp() * x;
    }
    for l in 2..=l_max {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * x * p1 - (lf - 1.0) * p0) / lf;
        p0 = p1;
        p1 = p2;
        let damp = (-lf * (lf + 1.0) * t / 2.0).exp();
        acc += (2.0 * lf + 1.0) / (4.0 * PI) * damp * p1;
        if damp < 1e-300 {
            break;
        }
    }
    Ok(acc)
}

/// Euclidean heat kernel of `Delta/2` in the plane at distance `r`.
pub fn plane_heat_kernel(t: f64, r: f64) -> f64 {
    (-r * r / (2.0 * t)).exp() / (2.0 * PI * t)
}

/// Small-time expansion `p^{R2}_t(r) e^{t/8} sqrt(r / sin r)`, valid on the cap.
pub fn sphere_heat_kernel_nagase(t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) {
        bail!(InvalidParameter, "t must be positive, got {t}");
    }
    if !(0.0..=PI / 3.0 + 1e-12).contains(&r) {
        bail!(Domain, "Nagase expansion only valid for r in [0, pi/3], got {r}");
    }
    let jac = if r < 1e-8 { 1.0 + r * r / 12.0 } else { (r / r.sin()).sqrt() };
    Ok(plane_heat_kernel(t, r) * (t / 8.0).exp() * jac)
}

/// Angular mean of `G(d(x, y))` over `theta_y`, for `x` at distance `r` from
/// the pole and `y` at distance `rp`:
/// `-1/2 log(1 - cos r cos r' + |cos r - cos r'|)`.
pub fn green_ring_mean(r: f64, rp: f64) -> f64 {
    let (c, cp) = (r.cos(), rp.cos());
    -0.5 * (1.0 - c * cp + (c - cp).abs()).ln()
}

/// `hat Q(t, x) = int_{S2} p_{|t|}(pole, y) G(x, y) dVol(y)` for `x` at distance
/// `r` from the pole. The angular integral is done in closed form, the radial
/// one by composite Gauss-Legendre on panels adapted to `sqrt t` and to `r`.
pub fn sphere_covariance(t: f64, r: f64) -> Result<f64> {
    let coarse = covariance_quadrature(t, r, 1)?;
    let fine = covariance_quadrature(t, r, 2)?;
    if !((coarse - fine).abs() <= 1e-7 * (1.0 + fine.abs())) {
        bail!(Numerical, "sphere covariance quadrature not converged at t = {t}, r = {r}: {coarse} vs {fine}");
    }
    Ok(fine)
}

fn covariance_quadrature(t: f64, r: f64, refine: usize) -> Result<f64> {
    let t = t.abs();
    if t == 0.0 {
        return sphere_green(r);
    }
    let l_max = series_l_max(t);
    let width = t.sqrt();
    let mut breaks = vec![0.0, PI];
    let mut s = width * 1e-3;
    while s < PI {
        breaks.push(s);
        s *= 1.5;
    }
    if r > 0.0 {
        breaks.push(r);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let rule = GaussRule::new(16);
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        // beyond 14 kernel widths the heat kernel is below 1e-40 of its peak
        if a > 14.0 * width {
            break;
        }
        acc += rule.composite(a, b, refine, |rp| {
            let p = sphere_heat_kernel_series(t, rp, l_max).unwrap_or(0.0);
            let g = if r == 0.0 { -(2.0 * (rp / 2.0).sin()).ln() } else { green_ring_mean(r, rp) };
            2.0 * PI * rp.sin() * p * g
        });
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereCovarianceReport {
    pub probes: usize,
    /// Extremes of `hat Q(z) + log |z|_s` over probes with `|z|_s` in `[0.02, 0.5]`.
    pub lower: f64,
    pub upper: f64,
}

impl SphereCovarianceReport {
    pub fn spread(&self) -> f64 {
        self.upper - self.lower
    }
    pub fn bounded(&self) -> bool {
        self.probes > 0 && self.spread() < 3.0
    }
}

/// Evaluates `hat Q` on a `(t, r)` probe grid and checks that
/// `hat Q(z) + log |z|_s` stays bounded, with `|(t, x)|_s = sqrt|t| + r`.
pub fn sphere_covariance_check(t_range: (f64, f64), r_range: (f64, f64), n: usize) -> Result<SphereCovarianceReport> {
    if r_range.1 > PI / 3.0 + 1e-12 || r_range.0 < 0.0 {
        bail!(Domain, "probe radii must lie in [0, pi/3]");
    }
    if !(t_range.0 > 0.0 && t_range.1 >= t_range.0) || n < 2 {
        bail!(InvalidParameter, "bad probe ranges");
    }
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut probes = 0;
    for i in 0..n {
        let t = t_range.0 * (t_range.1 / t_range.0).powf(i as f64 / (n - 1) as f64);
        for j in 0..n {
            let r = r_range.0 + (r_range.1 - r_range.0) * j as f64 / (n - 1) as f64;
            let norm = t.sqrt() + r;
            if !(0.02..=0.5).contains(&norm) {
                continue;
            }
            let v = sphere_covariance(t, r)? + norm.ln();
            lower = lower.min(v);
            upper = upper.max(v);
            probes += 1;
        }
    }
    Ok(SphereCovarianceReport { probes, lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(r: f64, th: f64) -> SpherePoint {
        SpherePoint::new(r, th).unwrap()
    }

    #[test]
    fn distance_examples() {
        let p = sp(0.7, 1.0);
        assert!(sphere_distance(&p, &p) < 1e-7);
        assert!((sphere_distance(&sp(0.0, 0.0), &sp(0.9, 2.0)) - 0.9).abs() < 1e-12);
        let a = sp(0.4, 0.3);
        let b = sp(PI - 0.4, 0.3 + PI);
        assert!((sphere_distance(&a, &b) - PI).abs() < 1e-7);
    }

    #[test]
    fn distortion_examples() {
        let p = sp(0.3, 1.0);
        let q = sp(0.8, 1.0);
        assert!((sphere_distance(&p, &q) - 0.5).abs() < 1e-12);
        assert!((polar_chord(&p, &q) - 0.5).abs() < 1e-12);
        let a = sp(0.5, 0.0);
        let b = sp(0.5, PI / 2.0);
        assert!(sphere_distance(&a, &b) < polar_chord(&a, &b));
    }

    #[test]
    fn green_examples() {
        assert!((sphere_green(PI).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!(sphere_green(0.0).is_err());
        for r in [1e-3, 5e-3, 1e-2] {
            let v = sphere_green(r).unwrap() + f64::ln(r);
            assert!(v.abs() <= r * r, "{v}");
        }
        let mut prev = f64::INFINITY;
        for i in 1..=100 {
            let g = sphere_green(PI * i as f64 / 100.0).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn laplacian_of_constant_and_cos() {
        let grid = SphereGrid::new(40, 32, PI / 3.0).unwrap();
        let c = grid.sample(|_| 3.0);
        assert!(laplace_beltrami(&grid, &c).unwrap().iter().all(|v| v.abs() < 1e-9));
        let f = grid.sample(|p| p.r.cos());
        let lf = laplace_beltrami(&grid, &f).unwrap();
        for i in 0..grid.n_r {
            let r = i as f64 * grid.h();
            for j in 0..grid.n_theta {
                assert!((lf[i * grid.n_theta + j] + 2.0 * r.cos()).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn zonal_harmonic_eigenvalues() {
        let grid = SphereGrid::new(60, 16, PI / 3.0).unwrap();
        for l in 0..=4usize {
            let f = grid.sample(|p| legendre(l, p.r.cos()));
            let lf = laplace_beltrami(&grid, &f).unwrap();
            let ev = -((l * (l + 1)) as f64);
            for i in 0..grid.n_r {
                let v = legendre(l, (i as f64 * grid.h()).cos());
                assert!((lf[i * grid.n_theta] - ev * v).abs() < 0.02, "l={l} i={i}");
            }
        }
    }

    #[test]
    fn non_zonal_harmonic() {
        // Y = sin r cos theta has eigenvalue -2
        let grid = SphereGrid::new(60, 64, PI / 3.0).unwrap();
        let f = grid.sample(|p| p.r.sin() * p.theta.cos());
        let lf = laplace_beltrami(&grid, &f).unwrap();
        // the angular stencil error grows like h_theta^2 / r near the pole
        for i in 10..grid.n_r {
            for j in 0..grid.n_theta {
                assert!((lf[i * grid.n_theta + j] + 2.0 * f[i * grid.n_theta + j]).abs() < 5e-3);
            }
        }
    }

    #[test]
    fn heat_kernel_mass_and_equilibrium() {
        let rule = GaussRule::new(64);
        for t in [0.05, 0.3, 1.0] {
            let l = series_l_max(t);
            // int_{S2} p = 2 pi int_{-1}^{1} p(acos mu) dmu
            let m = 2.0 * PI * rule.composite(-1.0, 1.0, 8, |mu| sphere_heat_kernel_series(t, mu.acos(), l).unwrap());
            assert!((m - 1.0).abs() < 1e-6, "t={t} mass={m}");
        }
        for r in [0.0, 1.0, 2.0, PI] {
            let v = sphere_heat_kernel_series(20.0, r, 10).unwrap();
            assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-6);
        }
        assert!(sphere_heat_kernel_series(0.01, 0.0, 10).is_err());
    }

    #[test]
    fn heat_kernel_peaks_at_pole() {
        for t in [0.01, 0.1, 1.0] {
            let l = series_l_max(t);
            let p0 = sphere_heat_kernel_series(t, 0.0, l).unwrap();
            for i in 1..30 {
                assert!(sphere_heat_kernel_series(t, i as f64 * 0.1, l).unwrap() <= p0);
            }
        }
    }

    #[test]
    fn nagase_examples() {
        let t = 0.02;
        assert!((sphere_heat_kernel_nagase(t, 0.0).unwrap() - (t / 8.0).exp() / (2.0 * PI * t)).abs() < 1e-12);
        assert!(sphere_heat_kernel_nagase(t, 1.2).is_err());
        let mut prev = f64::INFINITY;
        for i in 0..=50 {
            let v = sphere_heat_kernel_nagase(t, PI / 3.0 * i as f64 / 50.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn harnack_comparison_on_cap() {
        for t in [1e-3, 1e-2, 0.1] {
            let l = series_l_max(t);
            for i in 0..=20 {
                let r = PI / 3.0 * i as f64 / 20.0;
                let s = sphere_heat_kernel_series(t, r, l).unwrap();
                let e = plane_heat_kernel(t, r);
                // the series bottoms out at roundoff ~1e-12, compare above it
                if e > 1e-8 {
                    assert!(s >= e * (1.0 - 1e-9), "t={t} r={r}");
                }
            }
        }
    }

    #[test]
    fn ring_mean_matches_direct_average() {
        let (r, rp) = (0.4, 0.9);
        let x = sp(r, 0.0);
        let n = 4000;
        let mut acc = 0.0;
        for j in 0..n {
            let y = sp(rp, 2.0 * PI * (j as f64 + 0.5) / n as f64);
            acc += sphere_green(sphere_distance(&x, &y)).unwrap();
        }
        assert!((acc / n as f64 - green_ring_mean(r, rp)).abs() < 1e-9);
    }

    #[test]
    fn covariance_spectral_oracle() {
        // Independent route: G = sum_{l>=1} (2l+1)/(2 l (l+1)) P_l + const, so
        // hat Q(t, r) = sum_{l>=1} (2l+1)/(2 l(l+1)) e^{-l(l+1)t/2} P_l(cos r) + const.
        // Differences cancel the constant.
        let spec = |t: f64, r: f64| {
            let mut acc = 0.0;
            for l in 1..4000usize {
                let lf = l as f64;
                acc += (2.0 * lf + 1.0) / (2.0 * lf * (lf + 1.0)) * (-lf * (lf + 1.0) * t / 2.0).exp() * legendre(l, r.cos());
            }
            acc
        };
        for (t, r) in [(0.01, 0.3), (0.05, 0.0), (0.2, 0.8)] {
            let d_quad = sphere_covariance(t, r).unwrap() - sphere_covariance(0.3, 0.5).unwrap();
            let d_spec = spec(t, r) - spec(0.3, 0.5);
            assert!((d_quad - d_spec).abs() < 1e-6, "t={t} r={r}: {d_quad} vs {d_spec}");
        }
    }

    #[test]
    fn covariance_small_time_limit() {
        let r = 0.6;
        let q = sphere_covariance(1e-6, r).unwrap();
        assert!((q - sphere_green(r).unwrap()).abs() < 1e-4);
    }
}
