//! Puncture-weighted chaos on the lattice and the time-line moment spectrum.
//! Green functions, Seiberg bounds and the threshold formulas live in
//! `liouville_core::punctures`.

use rayon::prelude::*;

use liouville_core::error::{Error, Result};
use liouville_core::geometry::torus_distance;
use liouville_core::punctures::{timeline_spectrum, GreenTable, Puncture};
use liouville_core::stats::{bootstrap_stderr, effective_sample_size, linear_fit, mean, mean_stderr};
use liouville_core::thresholds::q_critical;
use liouville_core::TorusGrid;

use crate::gmc::{ChaosSetup, GmcMeasure, MomentFit, EXPONENT_CLAMP, MIN_ESS};

/// Cell masses times `exp(gamma sum_i alpha_i G(x_i, cell center))`. Cells
/// within one spacing of a puncture use the matched log asymptote.
pub fn weighted_measure(theta: &GmcMeasure, punctures: &[Puncture], gamma: f64) -> Result<GmcMeasure> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let grid = *theta.grid();
    let n = grid.n_space();
    let mut expo = vec![0.0; n * n];
    if gamma > 0.0 {
        for p in punctures {
            let table = GreenTable::new(n, p.position);
            for (e, g) in expo.iter_mut().zip(&table.values) {
                *e += gamma * p.alpha * g;
            }
        }
    }
    let w: Vec<f64> = expo.iter().map(|e| e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp()).collect();
    let mut masses = theta.masses().clone();
    for it in 0..grid.n_time() {
        for (m, f) in masses.slice_mut(it).iter_mut().zip(&w) {
            *m *= f;
        }
    }
    Ok(theta.with_masses(masses))
}

/// Cell average of `|y - x1|^-a` over the cell containing the puncture
/// (midpoint rule on a 64 x 64 subgrid).
fn center_cell_weight(dx: f64, offset: [f64; 2], a: f64) -> f64 {
    let k = 64;
    let h = dx / k as f64;
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let y = [-dx / 2.0 + (i as f64 + 0.5) * h - offset[0], -dx / 2.0 + (j as f64 + 0.5) * h - offset[1]];
            acc += (y[0] * y[0] + y[1] * y[1]).sqrt().powf(-a);
        }
    }
    acc / (k * k) as f64
}

/// `int_{B_s(0, r)} |y|^-a dy ds` for the continuum parabolic ball.
fn continuum_weighted_volume(r: f64, a: f64) -> f64 {
    let k = 4000;
    let h = r * r / k as f64;
    let mut acc = 0.0;
    for i in 0..k {
        let s = (i as f64 + 0.5) * h;
        let rho = r - s.sqrt();
        acc += 2.0 * std::f64::consts::PI * rho.powf(2.0 - a) / (2.0 - a);
    }
    2.0 * acc * h
}

/// Spatial cells around a point, sorted by distance, with weights.
struct Rings {
    cells: Vec<usize>,
    dist: Vec<f64>,
    weight: Vec<f64>,
}

impl Rings {
    fn new(grid: &TorusGrid, x1: [f64; 2], reach: f64, a: f64) -> Self {
        let n = grid.n_space();
        let dx = grid.dx();
        let mut v: Vec<(f64, usize, f64)> = Vec::new();
        for ix in 0..n {
            for iy in 0..n {
                let c = [(ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dx];
                let d = torus_distance(c, x1);
                if d <= reach + 1e-12 {
                    let w = if d < dx / 2.0 {
                        center_cell_weight(dx, [x1[0] - c[0], x1[1] - c[1]], a)
                    } else {
                        d.powf(-a)
                    };
                    v.push((d, ix * n + iy, w));
                }
            }
        }
        v.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap().then(p.1.cmp(&q.1)));
        Rings { dist: v.iter().map(|p| p.0).collect(), cells: v.iter().map(|p| p.1).collect(), weight: v.iter().map(|p| p.2).collect() }
    }

    /// Number of cells with distance `<= rho`.
    fn count(&self, rho: f64) -> usize {
        if rho < 0.0 {
            return 0;
        }
        self.dist.partition_point(|&d| d <= rho + 1e-12)
    }
}

/// Fits `log E[(int_B dist(., x1)^{-alpha1 gamma} dTheta)^q]` against `log r`
/// for balls centered on the time-line of one puncture. The weight is the
/// distance power of the moment statement, not `exp(alpha gamma G)`.
pub fn estimate_timeline_exponent(
    setup: &ChaosSetup,
    gamma: f64,
    puncture: &Puncture,
    q: f64,
    radii: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<MomentFit> {
    let spec = timeline_spectrum(gamma, puncture.alpha, q)?;
    if !(q < spec.q_star) && !spec.q_star.is_nan() {
        return Err(Error::Domain(format!("q = {q} beyond the time-line ceiling q* = {}", spec.q_star)));
    }
    if radii.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 radii, got {}", radii.len())));
    }
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicas".into()));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
    radii.dedup();
    let grid = setup.grid;
    let lo = 2.0 * grid.resolution();
    if radii.iter().any(|&r| r < lo * (1.0 - 1e-9) || r > 0.25) {
        return Err(Error::Domain(format!("radii must lie in [{lo}, 0.25]")));
    }
    let a = puncture.alpha * gamma;
    let dt = grid.dt();
    let nt = grid.n_time();
    let rings = Rings::new(&grid, puncture.position, radii[0], a);
    // per radius: slice reach, and cell counts per slice offset
    let shapes: Vec<Vec<usize>> = radii
        .iter()
        .map(|&r| {
            let reach = ((r * r / dt).floor() as usize).min(nt);
            (0..=reach).map(|k| rings.count(r - (k as f64 * dt).sqrt())).collect()
        })
        .collect();
    let corr: Vec<f64> = radii
        .iter()
        .zip(&shapes)
        .map(|(&r, sh)| {
            let lattice: f64 = sh
                .iter()
                .enumerate()
                .map(|(k, &c)| rings.weight[..c].iter().sum::<f64>() * if k == 0 { 1.0 } else { 2.0 })
                .sum::<f64>()
                * grid.cell_volume();
            continuum_weighted_volume(r, a) / lattice
        })
        .collect();
    let centers: Vec<Vec<usize>> = shapes
        .iter()
        .zip(&radii)
        .map(|(sh, r)| {
            let reach = sh.len() - 1;
            if 2 * reach >= nt {
                return Err(Error::Domain(format!("radius {r} needs more than {nt} slices")));
            }
            let step = reach.max(1);
            Ok((reach..nt - reach).step_by(step).collect())
        })
        .collect::<Result<_>>()?;
    let q0 = setup.q_zero()?;
    let vol = grid.cell_volume();
    let shift = -gamma * gamma * q0 / 2.0;
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            // prefix sums of weighted masses along the rings, per slice
            let m = rings.cells.len();
            let mut pre = vec![0.0; nt * (m + 1)];
            let mut clamped = 0usize;
            setup.stream_phi(seed, rep as u64, &mut |it, phi| {
                let row = &mut pre[it * (m + 1)..(it + 1) * (m + 1)];
                for (k, (&c, &w)) in rings.cells.iter().zip(&rings.weight).enumerate() {
                    let e = gamma * phi[c] + shift;
                    if e.abs() > EXPONENT_CLAMP {
                        clamped += 1;
                    }
                    row[k + 1] = row[k] + e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp() * vol * w;
                }
            })?;
            if clamped > 0 {
                return Err(Error::Numerical(format!("{clamped} clamped cells in replica {rep}")));
            }
            Ok(shapes
                .iter()
                .zip(&centers)
                .zip(&corr)
                .map(|((sh, cs), &cf)| {
                    let pw: Vec<f64> = cs
                        .iter()
                        .map(|&ic| {
                            let mut acc = pre[ic * (m + 1) + sh[0]];
                            for (k, &c) in sh.iter().enumerate().skip(1) {
                                acc += pre[(ic - k) * (m + 1) + c] + pre[(ic + k) * (m + 1) + c];
                            }
                            (acc * cf).powf(q)
                        })
                        .collect();
                    mean(&pw)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let mut moments = Vec::new();
    let mut moment_stderr = Vec::new();
    let mut ess = f64::INFINITY;
    for ri in 0..radii.len() {
        let c: Vec<f64> = rows.iter().map(|r| r[ri]).collect();
        let (mm, se) = mean_stderr(&c);
        moments.push(mm);
        moment_stderr.push(se);
        ess = ess.min(effective_sample_size(&c));
    }
    let near_threshold = gamma > 0.0 && q >= 0.8 * q_critical(gamma);
    if near_threshold && ess < MIN_ESS {
        return Err(Error::Fit(format!("effective sample size {ess:.1} below {MIN_ESS} near the moment threshold")));
    }
    let slope_of = |m: &[f64]| -> f64 {
        let y: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        linear_fit(&log_r, &y).map(|f| f.slope).unwrap_or(f64::NAN)
    };
    let fitted_exponent = slope_of(&moments);
    let per_rep: Vec<&Vec<f64>> = rows.iter().collect();
    let stderr = bootstrap_stderr(&per_rep, 200, seed, |pick| {
        let m: Vec<f64> = (0..radii.len()).map(|ri| mean(&pick.iter().map(|r| r[ri]).collect::<Vec<_>>())).collect();
        slope_of(&m)
    });
    Ok(MomentFit {
        gamma,
        q,
        fitted_exponent,
        radii,
        moments,
        moment_stderr,
        replica_count: replicas,
        stderr,
        ess,
        near_threshold,
    })
}
