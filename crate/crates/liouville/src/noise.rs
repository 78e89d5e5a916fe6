//! Lattice space-time white noise and parabolic mollification.

use liouville_core::error::{Error, Result};
use liouville_core::mollifier::{MollifierKernel, MollifierSpec};
use liouville_core::rng::{fill_normals, slice_stream};
use liouville_core::{Field, TorusGrid};

use crate::spectral::Spectral;

/// White noise on the slices of `grid`, plus `lead` slices before `t = 0` and
/// `trail` after the horizon so that time-mollified noise is exact on the
/// whole window. Slice `s` is generated from its own stream, so margins never
/// change the core values.
#[derive(Clone, Debug)]
pub struct NoiseRealization {
    grid: TorusGrid,
    seed: u64,
    lead: usize,
    trail: usize,
    values: Vec<f64>,
}

/// Per-cell standard deviation `1 / sqrt(dt dx^2)`.
pub fn noise_sigma(grid: &TorusGrid) -> f64 {
    1.0 / grid.cell_volume().sqrt()
}

/// Raw noise of slice `s` (any integer) under `seed`.
pub fn noise_slice(grid: &TorusGrid, seed: u64, s: i64) -> Vec<f64> {
    let mut out = vec![0.0; grid.slice_len()];
    fill_normals(seed, slice_stream(s), &mut out);
    let sigma = noise_sigma(grid);
    for v in out.iter_mut() {
        *v *= sigma;
    }
    out
}

pub fn sample_white_noise(grid: &TorusGrid, seed: u64) -> NoiseRealization {
    sample_white_noise_with_margins(grid, seed, 0, 0)
}

pub fn sample_white_noise_with_margins(grid: &TorusGrid, seed: u64, lead: usize, trail: usize) -> NoiseRealization {
    let m = grid.slice_len();
    let total = lead + grid.n_time() + trail;
    let mut values = vec![0.0; total * m];
    for (k, chunk) in values.chunks_mut(m).enumerate() {
        let s = k as i64 - lead as i64;
        chunk.copy_from_slice(&noise_slice(grid, seed, s));
    }
    NoiseRealization { grid: *grid, seed, lead, trail, values }
}

impl NoiseRealization {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn lead(&self) -> usize {
        self.lead
    }
    pub fn trail(&self) -> usize {
        self.trail
    }
    pub fn sigma(&self) -> f64 {
        noise_sigma(&self.grid)
    }

    /// Slice `s` for `-lead <= s < n_time + trail`.
    pub fn slice(&self, s: i64) -> &[f64] {
        let m = self.grid.slice_len();
        let k = (s + self.lead as i64) as usize;
        &self.values[k * m..(k + 1) * m]
    }

    pub fn first_slice(&self) -> i64 {
        -(self.lead as i64)
    }

    pub fn end_slice(&self) -> i64 {
        (self.grid.n_time() + self.trail) as i64
    }

    /// The slices of the core window as a field.
    pub fn core(&self) -> Field {
        let m = self.grid.slice_len();
        let start = self.lead * m;
        Field::from_vec(self.grid, self.values[start..start + self.grid.len()].to_vec()).expect("sizes agree")
    }

    /// Negated realization (same grid, seed and margins).
    pub fn negated(&self) -> NoiseRealization {
        NoiseRealization { values: self.values.iter().map(|v| -v).collect(), ..self.clone() }
    }
}

fn reflect(i: i64, n: usize) -> usize {
    // half-sample symmetric extension, period 2n
    let p = 2 * n as i64;
    let m = i.rem_euclid(p);
    if m < n as i64 { m as usize } else { (p - 1 - m) as usize }
}

/// Discrete convolution with the lattice-normalized `rho_eps`: spectral in
/// space (periodic), direct in time with half-sample reflection at both ends.
/// Reflection against a symmetric kernel keeps constants fixed and conserves
/// the total integral exactly.
pub fn mollify(field: &Field, m: &MollifierSpec) -> Result<Field> {
    let grid = *field.grid();
    let k = MollifierKernel::tabulate(m, &grid)?;
    let sp = Spectral::new(grid.n_space());
    let sym = k.spatial_symbol(grid.n_space());
    let nt = grid.n_time();
    let spatial: Vec<Vec<f64>> = (0..nt).map(|it| sp.apply_symbol(field.slice(it), |i| sym[i])).collect();
    let mut out = Field::zeros(grid);
    let h = k.half_time as i64;
    for it in 0..nt {
        let dst = out.slice_mut(it);
        for j in -h..=h {
            let w = k.temporal_weight(j);
            if w == 0.0 {
                continue;
            }
            let src = &spatial[reflect(it as i64 - j, nt)];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    Ok(out)
}

/// Temporal half width (in slices) of the tabulated mollifier.
pub fn mollifier_reach(m: &MollifierSpec, grid: &TorusGrid) -> Result<usize> {
    Ok(MollifierKernel::tabulate(m, grid)?.half_time)
}

/// `xi_eps = rho_eps * xi` on the core slices, using the margins for the time
/// convolution (no boundary treatment needed).
pub fn mollify_noise(noise: &NoiseRealization, m: &MollifierSpec) -> Result<Field> {
    let grid = *noise.grid();
    let k = MollifierKernel::tabulate(m, &grid)?;
    if noise.lead < k.half_time || noise.trail < k.half_time {
        return Err(Error::InvalidParameter(format!(
            "noise margins ({}, {}) shorter than the mollifier reach {}",
            noise.lead, noise.trail, k.half_time
        )));
    }
    let sp = Spectral::new(grid.n_space());
    let sym = k.spatial_symbol(grid.n_space());
    let h = k.half_time as i64;
    let mut out = Field::zeros(grid);
    for it in 0..grid.n_time() {
        let mut acc = vec![0.0; grid.slice_len()];
        for j in -h..=h {
            let w = k.temporal_weight(j);
            if w == 0.0 {
                continue;
            }
            for (a, s) in acc.iter_mut().zip(noise.slice(it as i64 - j)) {
                *a += w * s;
            }
        }
        out.slice_mut(it).copy_from_slice(&sp.apply_symbol(&acc, |i| sym[i]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_indices() {
        let v: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(v, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn margins_do_not_change_core() {
        let g = TorusGrid::new(8, 5, 1.0 / 64.0).unwrap();
        let a = sample_white_noise(&g, 3);
        let b = sample_white_noise_with_margins(&g, 3, 4, 2);
        assert_eq!(a.core(), b.core());
        assert_eq!(b.slice(-4), &noise_slice(&g, 3, -4)[..]);
    }
}
