//! Parabolic space-time metric on `R x T^2` and the lattice substrate.
//!
//! Cells are half-open boxes `[t, t+dt) x [x, x+dx) x [y, y+dx)`; a cell's
//! position is its center. Time is not periodic.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{bail, Result};

const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: [f64; 2],
}

impl SpaceTimePoint {
    /// Builds a point with the spatial part reduced modulo 1.
    pub fn new(t: f64, x: [f64; 2]) -> Self {
        SpaceTimePoint { t, x: [wrap_unit(x[0]), wrap_unit(x[1])] }
    }

    pub fn translate(&self, dt: f64, dx: [f64; 2]) -> Self {
        SpaceTimePoint::new(self.t + dt, [self.x[0] + dx[0], self.x[1] + dx[1]])
    }
}

/// Reduces `v` into `[0, 1)`.
pub fn wrap_unit(v: f64) -> f64 {
    let w = v - v.floor();
    if w >= 1.0 { 0.0 } else { w }
}

/// Signed displacement `a - b` on the unit circle, in `[-1/2, 1/2]`.
pub fn wrap_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - d.round()
}

/// Euclidean distance on the unit torus, i.e. the minimum over periodic images.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = wrap_delta(a[0], b[0]);
    let dy = wrap_delta(a[1], b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// `|t - t'|^{1/2} + d_T2(x, x')`.
pub fn parabolic_distance(z: &SpaceTimePoint, w: &SpaceTimePoint) -> f64 {
    (z.t - w.t).abs().sqrt() + torus_distance(z.x, w.x)
}

/// Lebesgue volume of the parabolic ball of radius `r` in `R x R^2`:
/// `int_{|t|<=r^2} pi (r - |t|^{1/2})^2 dt = pi r^4 / 3`.
pub fn parabolic_ball_volume(r: f64) -> f64 {
    core::f64::consts::PI * r.powi(4) / 3.0
}

/// Regular lattice on `[t0, t0 + n_time dt) x T^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid {
    n_space: usize,
    n_time: usize,
    dt: f64,
    t0: f64,
}

impl TorusGrid {
    pub fn new(n_space: usize, n_time: usize, dt: f64) -> Result<Self> {
        Self::with_origin(n_space, n_time, dt, 0.0)
    }

    pub fn with_origin(n_space: usize, n_time: usize, dt: f64, t0: f64) -> Result<Self> {
        if n_space < 2 || n_time == 0 {
            bail!(InvalidParameter, "grid needs n_space >= 2 and n_time >= 1, got {n_space} and {n_time}");
        }
        if !(dt > 0.0) || !dt.is_finite() {
            bail!(InvalidParameter, "dt must be positive, got {dt}");
        }
        let dx = 1.0 / n_space as f64;
        if dt > dx * dx * (1.0 + TOL) {
            bail!(InvalidParameter, "dt = {dt} exceeds dx^2 = {}", dx * dx);
        }
        Ok(TorusGrid { n_space, n_time, dt, t0 })
    }

    /// Grid with `dt = dx^2 / refine` covering at least `horizon`.
    pub fn parabolic(n_space: usize, horizon: f64, refine: f64) -> Result<Self> {
        let dx = 1.0 / n_space as f64;
        let dt = dx * dx / refine;
        let n_time = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        Self::new(n_space, n_time, dt)
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }
    pub fn n_time(&self) -> usize {
        self.n_time
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn dx(&self) -> f64 {
        1.0 / self.n_space as f64
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn horizon(&self) -> f64 {
        self.n_time as f64 * self.dt
    }
    pub fn cell_volume(&self) -> f64 {
        self.dt * self.dx() * self.dx()
    }
    pub fn slice_len(&self) -> usize {
        self.n_space * self.n_space
    }
    pub fn len(&self) -> usize {
        self.n_time * self.slice_len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// `max(dx, sqrt(dt))`, the parabolic size of one cell.
    pub fn resolution(&self) -> f64 {
        self.dx().max(self.dt.sqrt())
    }

    /// Same spatial lattice, different number of slices and origin.
    pub fn window(&self, start: usize, n_time: usize) -> TorusGrid {
        TorusGrid { n_time, t0: self.t0 + start as f64 * self.dt, ..*self }
    }

    pub fn index(&self, it: usize, ix: usize, iy: usize) -> usize {
        (it * self.n_space + ix) * self.n_space + iy
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let s = self.slice_len();
        let it = idx / s;
        let r = idx % s;
        (it, r / self.n_space, r % self.n_space)
    }

    pub fn center(&self, idx: usize) -> SpaceTimePoint {
        let (it, ix, iy) = self.unindex(idx);
        self.center_of(it, ix, iy)
    }

    pub fn center_of(&self, it: usize, ix: usize, iy: usize) -> SpaceTimePoint {
        let dx = self.dx();
        SpaceTimePoint {
            t: self.t0 + (it as f64 + 0.5) * self.dt,
            x: [(ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dx],
        }
    }

    /// Cell containing `z`, if its time lies inside the grid.
    pub fn locate(&self, z: &SpaceTimePoint) -> Option<(usize, usize, usize)> {
        let ft = (z.t - self.t0) / self.dt;
        if !(ft >= 0.0) || ft >= self.n_time as f64 {
            return None;
        }
        let n = self.n_space as f64;
        let ix = ((wrap_unit(z.x[0]) * n) as usize).min(self.n_space - 1);
        let iy = ((wrap_unit(z.x[1]) * n) as usize).min(self.n_space - 1);
        Some((ft as usize, ix, iy))
    }

    /// Signed integer wavenumber of DFT index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n_space as i64;
        let i = i as i64;
        if i <= n / 2 { i } else { i - n }
    }
}

/// A parabolic ball `B_s(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParabolicBall {
    pub center: SpaceTimePoint,
    pub radius: f64,
}

impl ParabolicBall {
    pub fn new(center: SpaceTimePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            bail!(InvalidParameter, "ball radius must be positive, got {radius}");
        }
        Ok(ParabolicBall { center, radius })
    }
}

fn check_resolved(grid: &TorusGrid, radius: f64) -> Result<()> {
    if radius < grid.resolution() * (1.0 - TOL) {
        bail!(Resolution, "radius {radius} below lattice resolution {}", grid.resolution());
    }
    Ok(())
}

/// Indices of cells whose centers lie in `ball`, sorted ascending.
pub fn ball_cells(grid: &TorusGrid, ball: &ParabolicBall) -> Result<Vec<usize>> {
    check_resolved(grid, ball.radius)?;
    let n = grid.n_space();
    let dx = grid.dx();
    let r = ball.radius;
    let c = ball.center;
    let mut out = Vec::new();
    for it in 0..grid.n_time() {
        let t = grid.t0() + (it as f64 + 0.5) * grid.dt();
        let lag = (t - c.t).abs();
        if lag > r * r {
            continue;
        }
        let rho = r - lag.sqrt();
        let xs = axis_candidates(n, dx, c.x[0], rho);
        let ys = axis_candidates(n, dx, c.x[1], rho);
        for &ix in &xs {
            let ddx = wrap_delta((ix as f64 + 0.5) * dx, c.x[0]);
            for &iy in &ys {
                let ddy = wrap_delta((iy as f64 + 0.5) * dx, c.x[1]);
                if (ddx * ddx + ddy * ddy).sqrt() + lag.sqrt() <= r {
                    out.push(grid.index(it, ix, iy));
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn axis_candidates(n: usize, dx: f64, c: f64, rho: f64) -> Vec<usize> {
    let reach = (rho / dx).ceil() as i64 + 1;
    if 2 * reach + 1 >= n as i64 {
        return (0..n).collect();
    }
    let base = (c / dx).floor() as i64;
    (base - reach..=base + reach).map(|i| i.rem_euclid(n as i64) as usize).collect()
}

/// Ball of radius `r` centered at a cell center, as integer offsets.
/// Summing a lattice quantity over many balls of one radius reuses it.
#[derive(Clone, Debug)]
pub struct BallStencil {
    pub radius: f64,
    pub offsets: Vec<(i64, i64, i64)>,
    pub time_reach: usize,
}

impl BallStencil {
    pub fn new(grid: &TorusGrid, radius: f64) -> Result<Self> {
        check_resolved(grid, radius)?;
        let dx = grid.dx();
        let dt = grid.dt();
        let treach = ((radius * radius) / dt + TOL).floor() as i64;
        let sreach = (radius / dx + TOL).floor() as i64;
        if 2 * sreach + 1 > grid.n_space() as i64 {
            bail!(InvalidParameter, "stencil radius {radius} wraps the torus");
        }
        let mut offsets = Vec::new();
        for a in -treach..=treach {
            let lag = (a as f64 * dt).abs().sqrt();
            for b in -sreach..=sreach {
                for c in -sreach..=sreach {
                    let d = ((b * b + c * c) as f64).sqrt() * dx;
                    if lag + d <= radius {
                        offsets.push((a, b, c));
                    }
                }
            }
        }
        Ok(BallStencil { radius, offsets, time_reach: treach as usize })
    }

    pub fn count(&self) -> usize {
        self.offsets.len()
    }

    /// Sum of `values` over the ball centered at cell `(it, ix, iy)`.
    /// The ball must fit in time: `time_reach <= it < n_time - time_reach`.
    pub fn sum(&self, grid: &TorusGrid, values: &[f64], it: usize, ix: usize, iy: usize) -> f64 {
        let n = grid.n_space() as i64;
        let mut acc = 0.0;
        for &(a, b, c) in &self.offsets {
            let t = (it as i64 + a) as usize;
            let x = (ix as i64 + b).rem_euclid(n) as usize;
            let y = (iy as i64 + c).rem_euclid(n) as usize;
            acc += values[grid.index(t, x, y)];
        }
        acc
    }
}

/// A real function sampled at the cells of a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        Field { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Field { grid, data: vec![c; grid.len()] }
    }

    pub fn from_vec(grid: TorusGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            bail!(InvalidParameter, "field has {} values, grid needs {}", data.len(), grid.len());
        }
        Ok(Field { grid, data })
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(SpaceTimePoint) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Field { grid, data }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, it: usize, ix: usize, iy: usize) -> f64 {
        self.data[self.grid.index(it, ix, iy)]
    }

    pub fn slice(&self, it: usize) -> &[f64] {
        let s = self.grid.slice_len();
        &self.data[it * s..(it + 1) * s]
    }

    pub fn slice_mut(&mut self, it: usize) -> &mut [f64] {
        let s = self.grid.slice_len();
        &mut self.data[it * s..(it + 1) * s]
    }

    /// Slices `start..start + len` as a field on the sub-window.
    pub fn window(&self, start: usize, len: usize) -> Field {
        let s = self.grid.slice_len();
        Field { grid: self.grid.window(start, len), data: self.data[start * s..(start + len) * s].to_vec() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid.len(), other.grid.len());
        Field { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// Integral over the domain, `sum value * cell volume`.
    pub fn integral(&self) -> f64 {
        crate::stats::tree_sum(&self.data) * self.grid.cell_volume()
    }
}
