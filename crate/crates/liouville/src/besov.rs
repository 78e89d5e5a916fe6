//! Parabolic Besov and Hölder statistics: scaled pairings `<eta, S_z^lam f>`,
//! sup statistics over probe lattices, regularity by scale regression, the
//! positive-measure product, and the Schauder / exponential Lipschitz checks.
//!
//! The sup over the unit ball of test functions in the Besov norm cannot be
//! computed; every statistic here uses one fixed test function and is
//! therefore a lower-bound proxy for the norm.

use std::borrow::Cow;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use liouville_core::error::{Error, Result};
use liouville_core::geometry::{wrap_delta, BallStencil};
use liouville_core::stats::linear_fit;
use liouville_core::{Field, SpaceTimePoint, TorusGrid};

use crate::gmc::GmcMeasure;
use crate::heat::duhamel;

/// Scales must satisfy `lam >= MIN_SCALE_CELLS * max(dx, sqrt dt)`.
pub const MIN_SCALE_CELLS: f64 = 4.0;

/// Anything that assigns a (signed) mass to each lattice cell.
pub trait LatticeMeasure: Sync {
    fn grid(&self) -> &TorusGrid;
    /// Mass per cell, in grid index order.
    fn cell_masses(&self) -> Cow<'_, [f64]>;
}

/// A function acts through its density: mass = value * cell volume.
impl LatticeMeasure for Field {
    fn grid(&self) -> &TorusGrid {
        Field::grid(self)
    }
    fn cell_masses(&self) -> Cow<'_, [f64]> {
        let v = self.grid().cell_volume();
        Cow::Owned(self.data().iter().map(|x| x * v).collect())
    }
}

impl LatticeMeasure for GmcMeasure {
    fn grid(&self) -> &TorusGrid {
        GmcMeasure::grid(self)
    }
    fn cell_masses(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.masses().data())
    }
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

fn bump_prime(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - u * u;
        -2.0 * u / (d * d) * bump(u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// `b(4s) b(2|y|)`: a smooth bump on the cylinder `|s| <= 1/4, |y| <= 1/2`,
    /// which sits inside the parabolic unit ball.
    Bump,
    /// `b(4s) d/dy1 b(2|y|)`, the first spatial derivative of the bump.
    GradX,
}

/// Test function on the parabolic unit ball, `amplitude * profile`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub profile: Profile,
    pub amplitude: f64,
    /// Derivative budget `m` of the normalization.
    pub order: usize,
}

impl TestFunction {
    /// Profile scaled so that its parabolic `C^order` norm is at most one.
    pub fn normalized(profile: Profile, order: usize) -> Self {
        let raw = TestFunction { profile, amplitude: 1.0, order };
        TestFunction { amplitude: 1.0 / raw.cm_norm(order), ..raw }
    }

    /// Bump with unit integral (its `C^m` norm exceeds one).
    pub fn unit_mass() -> Self {
        let raw = TestFunction { profile: Profile::Bump, amplitude: 1.0, order: 0 };
        TestFunction { amplitude: 1.0 / raw.integral(), ..raw }
    }

    pub fn eval(&self, s: f64, y: [f64; 2]) -> f64 {
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        let ts = bump(4.0 * s);
        if ts == 0.0 || r >= 0.5 {
            return 0.0;
        }
        let sp = match self.profile {
            Profile::Bump => bump(2.0 * r),
            Profile::GradX => {
                if r == 0.0 {
                    0.0
                } else {
                    2.0 * bump_prime(2.0 * r) * y[0] / r
                }
            }
        };
        self.amplitude * ts * sp
    }

    pub fn sup_norm(&self) -> f64 {
        self.sample_max(|s, y| self.eval(s, y).abs())
    }

    /// Midpoint-rule integral over the cylinder.
    pub fn integral(&self) -> f64 {
        let (nt, nx) = (400, 200);
        let (hs, hx) = (0.5 / nt as f64, 1.0 / nx as f64);
        let mut acc = 0.0;
        for i in 0..nt {
            let s = -0.25 + (i as f64 + 0.5) * hs;
            for j in 0..nx {
                for k in 0..nx {
                    let y = [-0.5 + (j as f64 + 0.5) * hx, -0.5 + (k as f64 + 0.5) * hx];
                    acc += self.eval(s, y);
                }
            }
        }
        acc * hs * hx * hx
    }

    /// Max over derivatives of parabolic order `<= m` (`d/ds` counts two),
    /// by finite differences on a sample grid.
    fn cm_norm(&self, m: usize) -> f64 {
        let h = 1e-4;
        let mut best = self.sup_norm();
        if m >= 1 {
            for axis in 0..2 {
                best = best.max(self.sample_max(|s, y| {
                    let mut a = y;
                    let mut b = y;
                    a[axis] += h;
                    b[axis] -= h;
                    ((self.eval(s, a) - self.eval(s, b)) / (2.0 * h)).abs()
                }));
            }
        }
        if m >= 2 {
            best = best.max(self.sample_max(|s, y| ((self.eval(s + h, y) - self.eval(s - h, y)) / (2.0 * h)).abs()));
            for (p, q) in [(0, 0), (0, 1), (1, 1)] {
                best = best.max(self.sample_max(|s, y| {
                    let f = |dp: f64, dq: f64| {
                        let mut z = y;
                        z[p] += dp;
                        z[q] += dq;
                        self.eval(s, z)
                    };
                    ((f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)).abs()
                }));
            }
        }
        best
    }

    fn sample_max(&self, g: impl Fn(f64, [f64; 2]) -> f64) -> f64 {
        let n = 80;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            let s = -0.25 + 0.5 * i as f64 / n as f64;
            for j in 0..=n {
                for k in 0..=n {
                    let y = [-0.5 + j as f64 / n as f64, -0.5 + k as f64 / n as f64];
                    best = best.max(g(s, y));
                }
            }
        }
        best
    }
}

fn check_scale(grid: &TorusGrid, lam: f64) -> Result<()> {
    let need = MIN_SCALE_CELLS * grid.resolution();
    if !(lam >= need * (1.0 - 1e-9)) {
        return Err(Error::Resolution(format!("scale {lam} under-resolved: needs >= {need}")));
    }
    if lam > 1.0 {
        return Err(Error::InvalidParameter(format!("scale {lam} must be <= 1")));
    }
    Ok(())
}

/// `<eta, S_z^lam f>` with `S_z^lam f(s, y) = lam^-4 f(lam^-2 (s - t), lam^-1 (y - x))`,
/// summed over cell centers. The support must lie in the time window.
pub fn pair_scaled(eta: &dyn LatticeMeasure, f: &TestFunction, z: &SpaceTimePoint, lam: f64) -> Result<f64> {
    let grid = *eta.grid();
    check_scale(&grid, lam)?;
    let half = lam * lam / 4.0;
    let (t0, t1) = (grid.t0(), grid.t0() + grid.horizon());
    if z.t - half < t0 - 1e-12 || z.t + half > t1 + 1e-12 {
        return Err(Error::Domain(format!("test function at t = {} leaves the time window", z.t)));
    }
    let masses = eta.cell_masses();
    let n = grid.n_space();
    let dx = grid.dx();
    let dt = grid.dt();
    let it_lo = (((z.t - half - t0) / dt) - 0.5).floor().max(0.0) as usize;
    let it_hi = ((((z.t + half - t0) / dt) - 0.5).ceil() as usize).min(grid.n_time() - 1);
    let reach = (0.5 * lam / dx).ceil() as i64 + 1;
    let scale = lam.powi(-4);
    let mut acc = 0.0;
    for it in it_lo..=it_hi {
        let s = (t0 + (it as f64 + 0.5) * dt - z.t) / (lam * lam);
        if (4.0 * s).abs() >= 1.0 {
            continue;
        }
        let bx = (z.x[0] / dx).floor() as i64;
        let by = (z.x[1] / dx).floor() as i64;
        for ix in bx - reach..=bx + reach {
            let jx = ix.rem_euclid(n as i64) as usize;
            let y0 = wrap_delta((jx as f64 + 0.5) * dx, z.x[0]) / lam;
            for iy in by - reach..=by + reach {
                let jy = iy.rem_euclid(n as i64) as usize;
                let y1 = wrap_delta((jy as f64 + 0.5) * dx, z.x[1]) / lam;
                let w = f.eval(s, [y0, y1]);
                if w != 0.0 {
                    acc += w * masses[grid.index(it, jx, jy)];
                }
            }
        }
    }
    Ok(acc * scale)
}

/// Weights of `S^lam f` for a probe sitting on a cell center.
struct Stencil {
    reach_t: usize,
    time: Vec<(i64, f64)>,
    space: Vec<(i64, i64, f64)>,
}

impl Stencil {
    fn new(grid: &TorusGrid, f: &TestFunction, lam: f64) -> Self {
        let (dt, dx) = (grid.dt(), grid.dx());
        let reach_t = (lam * lam / 4.0 / dt).floor() as i64 + 1;
        let reach_x = (0.5 * lam / dx).ceil() as i64 + 1;
        // the profile factors as a(s) c(y); keep the factors apart
        let time: Vec<(i64, f64)> = (-reach_t..=reach_t)
            .map(|j| (j, bump(4.0 * j as f64 * dt / (lam * lam))))
            .filter(|p| p.1 != 0.0)
            .collect();
        let unit = TestFunction { amplitude: f.amplitude, ..*f };
        let mut space = Vec::new();
        for a in -reach_x..=reach_x {
            for b in -reach_x..=reach_x {
                let w = unit.eval(0.0, [a as f64 * dx / lam, b as f64 * dx / lam]);
                if w != 0.0 {
                    space.push((a, b, w));
                }
            }
        }
        let reach_t = time.iter().map(|p| p.0.unsigned_abs() as usize).max().unwrap_or(0);
        Stencil { reach_t, time, space }
    }

    fn pair(&self, grid: &TorusGrid, masses: &[f64], it: usize, ix: usize, iy: usize, lam: f64) -> f64 {
        let n = grid.n_space() as i64;
        let mut acc = 0.0;
        for &(j, a) in &self.time {
            let t = (it as i64 + j) as usize;
            let mut inner = 0.0;
            for &(p, q, c) in &self.space {
                let x = (ix as i64 + p).rem_euclid(n) as usize;
                let y = (iy as i64 + q).rem_euclid(n) as usize;
                inner += c * masses[grid.index(t, x, y)];
            }
            acc += a * inner;
        }
        acc * lam.powi(-4)
    }
}

/// Cell-centered probes at spacing `<= lam / 2` (parabolic), restricted to
/// centers whose test-function support stays in the time window.
pub fn probe_lattice(grid: &TorusGrid, lam: f64) -> Result<Vec<SpaceTimePoint>> {
    check_scale(grid, lam)?;
    let (dt, dx) = (grid.dt(), grid.dx());
    let reach_t = (lam * lam / 4.0 / dt).floor() as usize;
    let nt = grid.n_time();
    if 2 * reach_t >= nt {
        return Err(Error::Domain(format!("scale {lam} needs more than {nt} slices")));
    }
    let step_t = ((lam * lam / 4.0 / dt).floor() as usize).max(1);
    let step_x = ((0.5 * lam / dx).floor() as usize).max(1);
    let n = grid.n_space();
    let mut out = Vec::new();
    let mut it = reach_t;
    while it + reach_t < nt {
        for ix in (0..n).step_by(step_x) {
            for iy in (0..n).step_by(step_x) {
                out.push(grid.center_of(it, ix, iy));
            }
        }
        it += step_t;
    }
    Ok(out)
}

/// `max_probe |<eta, S_z^lam f>|`. Probes are snapped to cell centers.
pub fn besov_sup_statistic(eta: &dyn LatticeMeasure, f: &TestFunction, lam: f64, probes: &[SpaceTimePoint]) -> Result<f64> {
    Ok(pairings(eta, f, lam, probes)?.into_iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// `<eta, S_z^lam f>` at each probe, snapped to cell centers.
pub fn pairings(eta: &dyn LatticeMeasure, f: &TestFunction, lam: f64, probes: &[SpaceTimePoint]) -> Result<Vec<f64>> {
    let grid = *eta.grid();
    check_scale(&grid, lam)?;
    let st = Stencil::new(&grid, f, lam);
    let masses = eta.cell_masses();
    let cells: Vec<(usize, usize, usize)> = probes
        .iter()
        .map(|z| {
            let (it, ix, iy) = grid
                .locate(z)
                .ok_or_else(|| Error::Domain(format!("probe at t = {} outside the window", z.t)))?;
            if it < st.reach_t || it + st.reach_t >= grid.n_time() {
                return Err(Error::Domain(format!("probe slice {it} too close to the window edge")));
            }
            Ok((it, ix, iy))
        })
        .collect::<Result<_>>()?;
    Ok(cells.par_iter().map(|&(it, ix, iy)| st.pair(&grid, &masses, it, ix, iy, lam)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    pub alpha_hat: f64,
    /// Strictly decreasing.
    pub scales: Vec<f64>,
    pub per_scale_sup: Vec<f64>,
    pub fit_residual: f64,
    /// Scales that entered the fit (the finest two may be dropped).
    pub fit_window: Range<usize>,
    /// Residual above [`FIT_FLAG_RESIDUAL`].
    pub flagged: bool,
}

/// RMS residual in `log sup` beyond which a fit is flagged.
pub const FIT_FLAG_RESIDUAL: f64 = 0.15;

/// `alpha_hat = -slope` of `log sup_z |<eta, S_z^lam f>|` against `log(1/lam)`,
/// probes from [`probe_lattice`] at each scale.
pub fn estimate_regularity(eta: &dyn LatticeMeasure, f: &TestFunction, scales: &[f64]) -> Result<RegularityEstimate> {
    let grid = *eta.grid();
    let probes = scales.iter().map(|&l| probe_lattice(&grid, l)).collect::<Result<Vec<_>>>()?;
    estimate_regularity_with(eta, f, scales, |i| probes[i].clone())
}

pub fn estimate_regularity_with(
    eta: &dyn LatticeMeasure,
    f: &TestFunction,
    scales: &[f64],
    probes: impl Fn(usize) -> Vec<SpaceTimePoint>,
) -> Result<RegularityEstimate> {
    check_scales(scales)?;
    let run = |tf: &TestFunction| {
        scales
            .iter()
            .enumerate()
            .map(|(i, &l)| besov_sup_statistic(eta, tf, l, &probes(i)))
            .collect::<Result<Vec<_>>>()
    };
    let sups = run(f)?;
    let first = fit_regularity(scales, sups.clone())?;
    match companion(f, &first) {
        Some(d) => fit_regularity(scales, max_merge(sups, run(&d)?)),
        None => Ok(first),
    }
}

/// The derivative profile joins the bump for `m >= 2` once the bump alone
/// reports `alpha_hat <= -1`.
fn companion(f: &TestFunction, first: &RegularityEstimate) -> Option<TestFunction> {
    (f.profile == Profile::Bump && f.order >= 2 && first.alpha_hat <= -1.0)
        .then(|| TestFunction::normalized(Profile::GradX, f.order))
}

fn max_merge(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| x.max(y)).collect()
}

/// Pools the sup statistic over independent replicas before fitting, i.e. the
/// sup is taken over `replicas` disjoint copies of the window. Replicas are
/// built one at a time by `make`, which must be deterministic in its index.
pub fn estimate_regularity_pooled<M: LatticeMeasure>(
    replicas: usize,
    mut make: impl FnMut(usize) -> Result<M>,
    f: &TestFunction,
    scales: &[f64],
) -> Result<RegularityEstimate> {
    check_scales(scales)?;
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let mut pooled = |tf: &TestFunction| -> Result<Vec<f64>> {
        let mut sups = vec![0.0f64; scales.len()];
        for r in 0..replicas {
            let eta = make(r)?;
            for (s, &l) in sups.iter_mut().zip(scales) {
                let probes = probe_lattice(eta.grid(), l)?;
                *s = s.max(besov_sup_statistic(&eta, tf, l, &probes)?);
            }
        }
        Ok(sups)
    };
    let sups = pooled(f)?;
    let first = fit_regularity(scales, sups.clone())?;
    match companion(f, &first) {
        Some(d) => {
            let extra = pooled(&d)?;
            fit_regularity(scales, max_merge(sups, extra))
        }
        None => Ok(first),
    }
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 scales, got {}", scales.len())));
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("scales must be strictly decreasing".into()));
    }
    Ok(())
}

fn fit_regularity(scales: &[f64], sups: Vec<f64>) -> Result<RegularityEstimate> {
    if sups.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Fit("vanishing sup statistic".into()));
    }
    let x: Vec<f64> = scales.iter().map(|l| (1.0 / l).ln()).collect();
    let y: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let all = linear_fit(&x, &y)?;
    let mut fit = all;
    let mut window = 0..scales.len();
    if scales.len() >= 5 {
        let k = scales.len() - 2;
        let coarse = linear_fit(&x[..k], &y[..k])?;
        if coarse.residual < 0.5 * all.residual {
            fit = coarse;
            window = 0..k;
        }
    }
    Ok(RegularityEstimate {
        alpha_hat: -fit.slope,
        scales: scales.to_vec(),
        per_scale_sup: sups,
        fit_residual: fit.residual,
        fit_window: window,
        flagged: fit.residual > FIT_FLAG_RESIDUAL,
    })
}

/// Sub-box of the lattice for windowed Hölder norms (no wrapping inside).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HolderWindow {
    pub time: Range<usize>,
    pub x: Range<usize>,
    pub y: Range<usize>,
}

/// `sup |f| + sup |f(z) - f(z')| / |z - z'|_s^beta` over pairs at lattice
/// offsets `2^k` along one axis (time, x or y) with `|z - z'|_s <= 1`.
/// Space wraps around the torus.
pub fn holder_norm(f: &Field, beta: f64) -> Result<f64> {
    let g = f.grid();
    let n = g.n_space();
    holder_impl(f, beta, &HolderWindow { time: 0..g.n_time(), x: 0..n, y: 0..n }, true)
}

/// [`holder_norm`] restricted to pairs inside `w`.
pub fn holder_norm_window(f: &Field, beta: f64, w: &HolderWindow) -> Result<f64> {
    let g = f.grid();
    if w.time.end > g.n_time() || w.x.end > g.n_space() || w.y.end > g.n_space() || w.time.is_empty() {
        return Err(Error::InvalidParameter("Hölder window outside the grid".into()));
    }
    holder_impl(f, beta, w, false)
}

fn holder_impl(f: &Field, beta: f64, w: &HolderWindow, wrap: bool) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    let g = f.grid();
    let n = g.n_space();
    let (dt, dx) = (g.dt(), g.dx());
    let mut sup: f64 = 0.0;
    for it in w.time.clone() {
        for ix in w.x.clone() {
            for iy in w.y.clone() {
                sup = sup.max(f.get(it, ix, iy).abs());
            }
        }
    }
    // (axis, offset, parabolic distance)
    let mut offsets = Vec::new();
    let mut k = 1usize;
    while k < w.time.len() {
        let d = (k as f64 * dt).sqrt();
        if d <= 1.0 {
            offsets.push((0, k, d));
        }
        k *= 2;
    }
    let span = if wrap { n } else { w.x.len().max(w.y.len()) };
    let mut k = 1usize;
    while k < span {
        let cells = if wrap { k.min(n - k) } else { k };
        let d = cells as f64 * dx;
        if d <= 1.0 {
            offsets.push((1, k, d));
            offsets.push((2, k, d));
        }
        k *= 2;
    }
    let quot = offsets
        .par_iter()
        .map(|&(axis, k, d)| {
            let dpow = d.powf(beta);
            let mut best: f64 = 0.0;
            for it in w.time.clone() {
                for ix in w.x.clone() {
                    for iy in w.y.clone() {
                        let (jt, jx, jy) = match axis {
                            0 => (it + k, ix, iy),
                            1 => (it, ix + k, iy),
                            _ => (it, ix, iy + k),
                        };
                        let (jx, jy) = if wrap { (jx % n, jy % n) } else { (jx, jy) };
                        if jt >= w.time.end || (!wrap && (jx >= w.x.end || jy >= w.y.end)) {
                            continue;
                        }
                        best = best.max((f.get(it, ix, iy) - f.get(jt, jx, jy)).abs());
                    }
                }
            }
            best / dpow
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup + quot)
}

/// Cell-wise product of a positive measure with a function (Prop. on products
/// with positive measures): a signed measure in general.
#[derive(Clone, Debug)]
pub struct ProductMeasure {
    masses: Field,
    pub beta: f64,
    pub g_sup: f64,
}

impl ProductMeasure {
    pub fn masses(&self) -> &Field {
        &self.masses
    }
}

impl LatticeMeasure for ProductMeasure {
    fn grid(&self) -> &TorusGrid {
        self.masses.grid()
    }
    fn cell_masses(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.masses.data())
    }
}

/// `mu * g` with `g` of Hölder order `beta > 0`, evaluated at cell centers.
pub fn positive_product(mu: &GmcMeasure, g: &Field, beta: f64) -> Result<ProductMeasure> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("positive-measure product needs beta > 0, got {beta}")));
    }
    if g.grid() != mu.grid() {
        return Err(Error::InvalidParameter("measure and function live on different grids".into()));
    }
    if g.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in the multiplier".into()));
    }
    Ok(ProductMeasure { masses: mu.masses().zip_with(g, |m, v| m * v), beta, g_sup: g.sup_norm() })
}

/// Both sides of `sup_z |<mu g, S_z^lam f>| <= |g|_inf |f|_inf sup_z mu(B(z, lam)) lam^-4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductBound {
    pub pairing_sup: f64,
    pub bound: f64,
}

pub fn product_bound(
    mu: &GmcMeasure,
    g: &Field,
    f: &TestFunction,
    lam: f64,
    probes: &[SpaceTimePoint],
) -> Result<ProductBound> {
    let prod = positive_product(mu, g, 1.0)?;
    let pairing_sup = besov_sup_statistic(&prod, f, lam, probes)?;
    let grid = *mu.grid();
    let ball = BallStencil::new(&grid, lam)?;
    let masses = mu.masses().data();
    let mut mass_sup: f64 = 0.0;
    for z in probes {
        let (it, ix, iy) = grid.locate(z).ok_or_else(|| Error::Domain("probe outside the window".into()))?;
        if it < ball.time_reach || it + ball.time_reach >= grid.n_time() {
            // the test function support is shorter than the ball; clip the ball
            let cells = liouville_core::geometry::ball_cells(&grid, &liouville_core::geometry::ParabolicBall::new(*z, lam)?)?;
            mass_sup = mass_sup.max(cells.iter().map(|&i| masses[i]).sum::<f64>());
        } else {
            mass_sup = mass_sup.max(ball.sum(&grid, masses, it, ix, iy));
        }
    }
    Ok(ProductBound { pairing_sup, bound: g.sup_norm() * f.sup_norm() * mass_sup * lam.powi(-4) })
}

/// Which product applies to `f in C^alpha` times `g in C^beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProductPath {
    /// `alpha + beta > 0`: the bilinear product exists.
    Generic,
    /// Positive measure times a `C^beta` function, `beta > 0`.
    PositiveMeasure,
}

pub fn product_path(alpha: f64, beta: f64, positive_measure: bool) -> Result<ProductPath> {
    if alpha + beta > 0.0 {
        Ok(ProductPath::Generic)
    } else if positive_measure && beta > 0.0 {
        Ok(ProductPath::PositiveMeasure)
    } else {
        Err(Error::Domain(format!(
            "product of C^{alpha} and C^{beta} undefined: alpha + beta <= 0 and no positive-measure structure"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchauderReport {
    pub alpha_in: f64,
    pub alpha_out: f64,
    /// `alpha_out - alpha_in`.
    pub gain: f64,
    pub kappa: f64,
    /// `gain >= 2 - kappa - 0.4`.
    pub gain_ok: bool,
    /// `(t, sup_{s <= t} |K f(s)|)`.
    pub prefactors: Vec<(f64, f64)>,
    /// Log-log slope of the prefactors in `t`.
    pub prefactor_exponent: f64,
    /// Prefactors shrink as `t` decreases.
    pub decays: bool,
}

/// Regularity gain of the Duhamel operator `K` on `f`, and the small-time
/// behaviour of `K f` on `[0, t]` for each `t` in `times`.
pub fn schauder_check(f: &Field, kappa: f64, times: &[f64], scales: &[f64], tf: &TestFunction) -> Result<SchauderReport> {
    if times.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 times".into()));
    }
    let kf = duhamel(f);
    let grid = *f.grid();
    let mut prefactors = Vec::new();
    for &t in times {
        let last = ((t / grid.dt()).round() as usize).min(grid.n_time() - 1);
        if last == 0 {
            return Err(Error::Resolution(format!("time {t} below one step")));
        }
        let sup = (0..=last).flat_map(|it| kf.slice(it).iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        prefactors.push((t, sup));
    }
    if kf.sup_norm() == 0.0 {
        return Ok(SchauderReport {
            alpha_in: f64::INFINITY,
            alpha_out: f64::INFINITY,
            gain: f64::INFINITY,
            kappa,
            gain_ok: true,
            prefactors,
            prefactor_exponent: f64::INFINITY,
            decays: true,
        });
    }
    let a_in = estimate_regularity(f, tf, scales)?;
    let a_out = estimate_regularity(&kf, tf, scales)?;
    let gain = a_out.alpha_hat - a_in.alpha_hat;
    let lx: Vec<f64> = prefactors.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = prefactors.iter().map(|p| p.1.ln()).collect();
    let prefactor_exponent = linear_fit(&lx, &ly)?.slope;
    let mut sorted = prefactors.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let decays = sorted.windows(2).all(|w| w[0].1 <= w[1].1) && prefactor_exponent > 0.0;
    Ok(SchauderReport {
        alpha_in: a_in.alpha_hat,
        alpha_out: a_out.alpha_hat,
        gain,
        kappa,
        gain_ok: gain >= 2.0 - kappa - 0.4,
        prefactors,
        prefactor_exponent,
        decays,
    })
}

/// `C` in `|e^u - e^v|_beta <= C |u - v|_beta`, calibrated at radius 1.
pub const EXP_LIPSCHITZ_C: f64 = 3.0 * std::f64::consts::E;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub holds: bool,
}

/// Checks the exponential Lipschitz bound for `u, v` in the Hölder ball of radius `r`.
pub fn exp_lipschitz_check(u: &Field, v: &Field, beta: f64, r: f64) -> Result<LipschitzReport> {
    let (nu, nv) = (holder_norm(u, beta)?, holder_norm(v, beta)?);
    if nu > r || nv > r {
        return Err(Error::Domain(format!("inputs have Hölder norms {nu}, {nv} beyond radius {r}")));
    }
    let lhs = holder_norm(&u.zip_with(v, |a, b| a.exp() - b.exp()), beta)?;
    let rhs = holder_norm(&u.zip_with(v, |a, b| a - b), beta)?;
    Ok(LipschitzReport { lhs, rhs, constant: EXP_LIPSCHITZ_C, holds: lhs <= EXP_LIPSCHITZ_C * rhs * (1.0 + 1e-12) })
}
