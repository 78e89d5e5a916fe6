//! Parabolic mollifier `rho_eps(t, x) = eps^{-4} rho(t / eps^2, x / eps)` and
//! its lattice tabulation.
//!
//! The profile is a product `a(t) b(|x|)` of one-dimensional bumps, so the
//! tabulated kernel factors into a temporal filter and a spatial stencil, each
//! renormalized to sum to exactly 1.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

use crate::error::{bail, Result};
use crate::geometry::TorusGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MollifierShape {
    Bump,
    GaussianTruncated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifierSpec {
    pub shape: MollifierShape,
    pub epsilon: f64,
}

impl MollifierSpec {
    pub fn bump(epsilon: f64) -> Self {
        MollifierSpec { shape: MollifierShape::Bump, epsilon }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        MollifierSpec { epsilon, ..*self }
    }
}

/// One-dimensional factor of the profile, supported on `|u| < 1`.
pub fn profile_1d(shape: MollifierShape, u: f64) -> f64 {
    let u2 = u * u;
    if u2 >= 1.0 {
        return 0.0;
    }
    match shape {
        MollifierShape::Bump => (-1.0 / (1.0 - u2)).exp(),
        MollifierShape::GaussianTruncated => (-u2 / (2.0 * (1.0 / 3.0) * (1.0 / 3.0))).exp(),
    }
}

/// Unnormalized profile `rho(t, x)`.
pub fn profile(shape: MollifierShape, t: f64, x: [f64; 2]) -> f64 {
    profile_1d(shape, t) * profile_1d(shape, (x[0] * x[0] + x[1] * x[1]).sqrt())
}

/// `eps >= 2 max(dx, sqrt(dt))`.
pub fn check_resolved(spec: &MollifierSpec, grid: &TorusGrid) -> Result<()> {
    if !(spec.epsilon > 0.0) {
        bail!(InvalidParameter, "epsilon must be positive, got {}", spec.epsilon);
    }
    let need = 2.0 * grid.resolution();
    if spec.epsilon < need * (1.0 - 1e-9) {
        bail!(Resolution, "epsilon = {} under-resolved: needs >= 2 max(dx, sqrt dt) = {need}", spec.epsilon);
    }
    if spec.epsilon >= 0.5 {
        bail!(InvalidParameter, "epsilon = {} must stay below half the torus", spec.epsilon);
    }
    Ok(())
}

/// Tabulated, renormalized kernel on a lattice.
#[derive(Clone, Debug)]
pub struct MollifierKernel {
    pub spec: MollifierSpec,
    /// Weights `w_j`, `j = -half_time ..= half_time`.
    pub temporal: Vec<f64>,
    pub half_time: usize,
    /// `(2 half_space + 1)^2` weights, row-major in the two spatial offsets.
    pub spatial: Vec<f64>,
    pub half_space: usize,
}

impl MollifierKernel {
    pub fn tabulate(spec: &MollifierSpec, grid: &TorusGrid) -> Result<Self> {
        check_resolved(spec, grid)?;
        let eps = spec.epsilon;
        let half_time = (eps * eps / grid.dt()).ceil() as usize;
        let mut temporal: Vec<f64> = (0..=2 * half_time)
            .map(|j| profile_1d(spec.shape, (j as f64 - half_time as f64) * grid.dt() / (eps * eps)))
            .collect();
        normalize(&mut temporal);
        let half_space = (eps / grid.dx()).ceil() as usize;
        let w = 2 * half_space + 1;
        let mut spatial = Vec::with_capacity(w * w);
        for a in 0..w {
            for b in 0..w {
                let da = (a as f64 - half_space as f64) * grid.dx();
                let db = (b as f64 - half_space as f64) * grid.dx();
                spatial.push(profile_1d(spec.shape, (da * da + db * db).sqrt() / eps));
            }
        }
        normalize(&mut spatial);
        // trim zero rims left by the ceil() above
        let (temporal, half_time) = trim_1d(temporal, half_time);
        let (spatial, half_space) = trim_2d(spatial, half_space);
        Ok(MollifierKernel { spec: *spec, temporal, half_time, spatial, half_space })
    }

    pub fn temporal_weight(&self, j: i64) -> f64 {
        let h = self.half_time as i64;
        if j.abs() > h { 0.0 } else { self.temporal[(j + h) as usize] }
    }

    pub fn spatial_weight(&self, a: i64, b: i64) -> f64 {
        let h = self.half_space as i64;
        if a.abs() > h || b.abs() > h {
            return 0.0;
        }
        let w = 2 * self.half_space + 1;
        self.spatial[(a + h) as usize * w + (b + h) as usize]
    }

    /// Discrete Fourier symbol of the spatial stencil on an `n x n` torus,
    /// indexed like the DFT output. Real because the stencil is even.
    pub fn spatial_symbol(&self, n: usize) -> Vec<f64> {
        let h = self.half_space as i64;
        let mut cos_table = Vec::with_capacity(n);
        for k in 0..n {
            cos_table.push((2.0 * PI * k as f64 / n as f64).cos());
        }
        let mut out = Vec::with_capacity(n * n);
        for k1 in 0..n {
            for k2 in 0..n {
                let mut acc = 0.0;
                for a in -h..=h {
                    for b in -h..=h {
                        let w = self.spatial_weight(a, b);
                        if w == 0.0 {
                            continue;
                        }
                        let phase = (k1 as i64 * a + k2 as i64 * b).rem_euclid(n as i64) as usize;
                        acc += w * cos_table[phase];
                    }
                }
                out.push(acc);
            }
        }
        out
    }
}

fn normalize(v: &mut [f64]) {
    let s = crate::stats::tree_sum(v);
    for x in v.iter_mut() {
        *x /= s;
    }
}

fn trim_1d(v: Vec<f64>, half: usize) -> (Vec<f64>, usize) {
    let mut k = 0;
    while k < half && v[k] == 0.0 && v[v.len() - 1 - k] == 0.0 {
        k += 1;
    }
    (v[k..v.len() - k].to_vec(), half - k)
}

fn trim_2d(v: Vec<f64>, half: usize) -> (Vec<f64>, usize) {
    let w = 2 * half + 1;
    let mut k = 0;
    'outer: while k < half {
        for a in 0..w {
            for b in 0..w {
                let on_rim = a == k || b == k || a == w - 1 - k || b == w - 1 - k;
                if on_rim && v[a * w + b] != 0.0 {
                    break 'outer;
                }
            }
        }
        k += 1;
    }
    let nw = w - 2 * k;
    let mut out = Vec::with_capacity(nw * nw);
    for a in k..w - k {
        for b in k..w - k {
            out.push(v[a * w + b]);
        }
    }
    (out, half - k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sums_to_one_and_is_nonnegative() {
        let grid = TorusGrid::new(64, 10, 1.0 / 4096.0).unwrap();
        for shape in [MollifierShape::Bump, MollifierShape::GaussianTruncated] {
            let k = MollifierKernel::tabulate(&MollifierSpec { shape, epsilon: 4.0 / 64.0 }, &grid).unwrap();
            let st: f64 = k.temporal.iter().sum();
            let ss: f64 = k.spatial.iter().sum();
            assert!((st - 1.0).abs() < 1e-14 && (ss - 1.0).abs() < 1e-14);
            assert!(k.temporal.iter().chain(&k.spatial).all(|&w| w >= 0.0));
            assert!(k.temporal_weight(k.half_time as i64) > 0.0);
        }
    }

    #[test]
    fn radially_symmetric_stencil() {
        let grid = TorusGrid::new(64, 10, 1.0 / 4096.0).unwrap();
        let k = MollifierKernel::tabulate(&MollifierSpec::bump(5.0 / 64.0), &grid).unwrap();
        assert_eq!(k.spatial_weight(1, 2), k.spatial_weight(-2, 1));
        assert_eq!(k.spatial_weight(3, 0), k.spatial_weight(0, -3));
        assert!(k.spatial_weight(0, 0) > k.spatial_weight(1, 0));
    }

    #[test]
    fn under_resolved_is_rejected() {
        let grid = TorusGrid::new(64, 10, 1.0 / 4096.0).unwrap();
        assert!(matches!(
            MollifierKernel::tabulate(&MollifierSpec::bump(1.0 / 64.0), &grid),
            Err(crate::Error::Resolution(_))
        ));
    }

    #[test]
    fn symbol_at_zero_is_one() {
        let grid = TorusGrid::new(16, 4, 1.0 / 256.0).unwrap();
        let k = MollifierKernel::tabulate(&MollifierSpec::bump(3.0 / 16.0), &grid).unwrap();
        let s = k.spatial_symbol(16);
        assert!((s[0] - 1.0).abs() < 1e-14);
        assert!(s.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }
}
