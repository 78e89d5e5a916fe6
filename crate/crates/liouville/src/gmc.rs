//! Wick-ordered chaos `Theta_eps = exp(gamma Phi_eps - gamma^2 Q_eps(0) / 2)`
//! on the lattice, ball masses, and the Monte Carlo moment machinery.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use liouville_core::error::{Error, Result};
use liouville_core::geometry::{ball_cells, parabolic_ball_volume, BallStencil, ParabolicBall};
use liouville_core::mollifier::MollifierSpec;
use liouville_core::rng::derive_seed;
use liouville_core::spectrum::moment_spectrum;
use liouville_core::stats::{bootstrap_stderr, effective_sample_size, linear_fit, mean, mean_stderr, tree_sum};
use liouville_core::thresholds::q_critical;
use liouville_core::{Field, SpaceTimePoint, TorusGrid};

use crate::heat::{covariance_at_zero, sample_phi_spectral, stream_phi_spectral, HeatKernelSpec};
use crate::spectral::Spectral;

/// Exponents are clamped to `[-EXPONENT_CLAMP, EXPONENT_CLAMP]` before `exp`.
pub const EXPONENT_CLAMP: f64 = 700.0;

#[derive(Clone, Debug)]
pub struct GmcMeasure {
    masses: Field,
    gamma: f64,
    epsilon: Option<f64>,
    clamped: usize,
}

impl GmcMeasure {
    pub fn grid(&self) -> &TorusGrid {
        self.masses.grid()
    }
    /// Cell masses (already multiplied by the cell volume).
    pub fn masses(&self) -> &Field {
        &self.masses
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }
    /// Same gamma, epsilon and clamp count with new cell masses.
    pub(crate) fn with_masses(&self, masses: Field) -> Self {
        GmcMeasure { masses, gamma: self.gamma, epsilon: self.epsilon, clamped: self.clamped }
    }
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }
    /// Cells whose exponent hit the clamp.
    pub fn clamped(&self) -> usize {
        self.clamped
    }
    pub fn total_mass(&self) -> f64 {
        tree_sum(self.masses.data())
    }
    /// Density `mass / cell volume` of cell `idx`.
    pub fn density(&self, idx: usize) -> f64 {
        self.masses.data()[idx] / self.grid().cell_volume()
    }
}

fn exp_measure(phi: &Field, gamma: f64, shift: f64) -> GmcMeasure {
    let vol = phi.grid().cell_volume();
    let mut clamped = 0;
    let data = phi
        .data()
        .iter()
        .map(|p| {
            let e = gamma * p + shift;
            if e.abs() > EXPONENT_CLAMP {
                clamped += 1;
            }
            e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp() * vol
        })
        .collect();
    let masses = Field::from_vec(*phi.grid(), data).expect("same grid");
    GmcMeasure { masses, gamma, epsilon: None, clamped }
}

/// Wick exponential with the exact lattice variance `q_zero = Q_eps(0)`.
pub fn wick_exponential(phi: &Field, gamma: f64, q_zero: f64) -> Result<GmcMeasure> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(exp_measure(phi, gamma, -gamma * gamma * q_zero / 2.0))
}

/// `C_rho eps^{gamma^2/2} e^{gamma Phi_eps}`, the renormalization used in the
/// convergence statement. Differs from Wick by `exp(gamma^2/2 (Q_eps(0) - log 1/eps - C_hat))`.
pub fn c_rho_exponential(phi: &Field, gamma: f64, epsilon: f64, c_rho: f64) -> Result<GmcMeasure> {
    if !(gamma >= 0.0) || !(epsilon > 0.0) || !(c_rho > 0.0) {
        return Err(Error::InvalidParameter("need gamma >= 0, epsilon > 0, c_rho > 0".into()));
    }
    Ok(exp_measure(phi, gamma, c_rho.ln() + gamma * gamma / 2.0 * epsilon.ln()).with_epsilon(epsilon))
}

/// `Theta(B)`: sum of cell masses over `ball_cells`.
pub fn ball_mass(theta: &GmcMeasure, ball: &ParabolicBall) -> Result<f64> {
    let cells = ball_cells(theta.grid(), ball)?;
    let m = theta.masses.data();
    let v: Vec<f64> = cells.iter().map(|&i| m[i]).collect();
    Ok(tree_sum(&v))
}

/// Running sums over time of the spatial spectra of a lattice measure:
/// row `s` holds `sum_{u < s} FFT(slice u)` (Hermitian half only), so any
/// block of slices costs one subtraction. Slices can be pushed one at a time
/// and the storage reused.
pub struct MassSpectra {
    sp: Spectral,
    hn: usize,
    rows: usize,
    cum: Vec<Complex64>,
    pending: Option<Vec<f64>>,
    buf: Vec<Complex64>,
    pair: (Vec<Complex64>, Vec<Complex64>),
}

impl MassSpectra {
    pub fn new(theta: &GmcMeasure) -> Self {
        let g = theta.grid();
        let mut s = MassSpectra::empty(g);
        for it in 0..g.n_time() {
            s.push_slice(theta.masses.slice(it));
        }
        s.finish();
        s
    }

    /// Storage for `grid.n_time()` slices.
    pub fn empty(grid: &TorusGrid) -> Self {
        let sp = Spectral::new(grid.n_space());
        let hn = sp.half_len();
        let zero = Complex64::new(0.0, 0.0);
        MassSpectra {
            sp,
            hn,
            rows: 1,
            cum: vec![zero; (grid.n_time() + 1) * hn],
            pending: None,
            buf: vec![zero; grid.slice_len()],
            pair: (vec![zero; hn], vec![zero; hn]),
        }
    }

    /// Forget the pushed slices, keep the storage.
    pub fn reset(&mut self) {
        self.rows = 1;
        self.pending = None;
    }

    fn append(&mut self, which: usize) {
        let hn = self.hn;
        let (done, rest) = self.cum.split_at_mut(self.rows * hn);
        let prev = &done[(self.rows - 1) * hn..];
        let spec = if which == 0 { &self.pair.0 } else { &self.pair.1 };
        for ((o, p), s) in rest[..hn].iter_mut().zip(prev).zip(spec) {
            *o = p + s;
        }
        self.rows += 1;
    }

    pub fn push_slice(&mut self, slice: &[f64]) {
        match self.pending.take() {
            None => self.pending = Some(slice.to_vec()),
            Some(first) => {
                self.sp.forward_pair_half(&first, slice, &mut self.buf, &mut self.pair.0, &mut self.pair.1);
                self.append(0);
                self.append(1);
            }
        }
    }

    pub fn finish(&mut self) {
        if let Some(first) = self.pending.take() {
            let zeros = vec![0.0; first.len()];
            self.sp.forward_pair_half(&first, &zeros, &mut self.buf, &mut self.pair.0, &mut self.pair.1);
            self.append(0);
        }
    }

    fn n_time(&self) -> usize {
        self.rows - 1
    }

    fn row(&self, s: usize) -> &[Complex64] {
        &self.cum[s * self.hn..(s + 1) * self.hn]
    }
}

/// Masses of all balls of one radius centered on the cells of a time slice,
/// computed by FFT: time offsets sharing a spatial disk form two runs
/// (`a` and `-a`), summed from the running sums, then each distinct disk is
/// applied once.
pub struct BallFamily {
    pub radius: f64,
    pub time_reach: usize,
    /// Lattice cells in one ball.
    pub count: usize,
    /// `(inclusive offset runs, disk spectrum)`; disks are symmetric so
    /// their spectra are real.
    groups: Vec<(Vec<(i64, i64)>, Vec<f64>)>,
}

impl BallFamily {
    pub fn new(grid: &TorusGrid, radius: f64) -> Result<Self> {
        let st = BallStencil::new(grid, radius)?;
        let n = grid.n_space();
        let mut disks: BTreeMap<i64, Vec<(i64, i64)>> = BTreeMap::new();
        for &(a, b, c) in &st.offsets {
            disks.entry(a).or_default().push((b, c));
        }
        // nested disks: equal cell count means equal disk
        let mut by_size: BTreeMap<usize, (Vec<i64>, Vec<(i64, i64)>)> = BTreeMap::new();
        for (a, d) in disks {
            let e = by_size.entry(d.len()).or_insert_with(|| (Vec::new(), d.clone()));
            e.0.push(a);
        }
        let sp = Spectral::new(n);
        let groups = by_size
            .into_values()
            .map(|(mut offs, disk)| {
                offs.sort_unstable();
                let mut runs: Vec<(i64, i64)> = Vec::new();
                for a in offs {
                    match runs.last_mut() {
                        Some(r) if r.1 + 1 == a => r.1 = a,
                        _ => runs.push((a, a)),
                    }
                }
                let mut ind = vec![0.0; n * n];
                for (b, c) in disk {
                    // mass at x + (b, c) enters the ball at x; the disk is symmetric
                    let i = (-b).rem_euclid(n as i64) as usize;
                    let j = (-c).rem_euclid(n as i64) as usize;
                    ind[i * n + j] = 1.0;
                }
                let hat = sp.forward(&ind);
                (runs, hat[..sp.half_len()].iter().map(|c| c.re).collect())
            })
            .collect();
        Ok(BallFamily { radius, time_reach: st.time_reach, count: st.count(), groups })
    }

    /// Ball masses centered at every cell of slice `it`.
    pub fn masses_at(&self, spectra: &MassSpectra, it: usize) -> Result<Vec<f64>> {
        let nt = spectra.n_time();
        if it < self.time_reach || it + self.time_reach >= nt {
            return Err(Error::Domain(format!(
                "ball of radius {} around slice {it} leaves the time window",
                self.radius
            )));
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); spectra.hn];
        for (runs, disk) in &self.groups {
            for &(lo, hi) in runs {
                let top = spectra.row((it as i64 + hi + 1) as usize);
                let bot = spectra.row((it as i64 + lo) as usize);
                for (((o, t), b), d) in acc.iter_mut().zip(top).zip(bot).zip(disk) {
                    *o += (t - b) * d;
                }
            }
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); spectra.buf.len()];
        let mut out = vec![0.0; spectra.buf.len()];
        spectra.sp.inverse_half(&acc, &mut buf, &mut out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(out)
    }

    pub fn groups_len(&self) -> usize {
        self.groups.iter().map(|g| g.0.len()).sum()
    }

    /// Continuum volume over lattice volume of the ball.
    pub fn volume_correction(&self, grid: &TorusGrid) -> f64 {
        parabolic_ball_volume(self.radius) / (self.count as f64 * grid.cell_volume())
    }
}

/// Everything needed to draw `Phi_eps` and its Wick chaos.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChaosSetup {
    pub grid: TorusGrid,
    pub mollifier: MollifierSpec,
    pub kernel: HeatKernelSpec,
}

impl ChaosSetup {
    pub fn q_zero(&self) -> Result<f64> {
        covariance_at_zero(&self.mollifier, &self.kernel, &self.grid)
    }

    /// Slices of `Phi_eps` for replica `index` of `master`, in time order.
    pub fn stream_phi(&self, master: u64, index: u64, sink: &mut dyn FnMut(usize, &[f64])) -> Result<()> {
        stream_phi_spectral(&self.grid, derive_seed(master, index), &self.mollifier, &self.kernel, sink)
    }

    /// `Phi_eps` for replica `index` of `master` (noise drawn in Fourier space).
    pub fn phi(&self, master: u64, index: u64) -> Result<Field> {
        sample_phi_spectral(&self.grid, derive_seed(master, index), &self.mollifier, &self.kernel)
    }
}

/// Mean over replicas of `Theta([0, T] x T^2) / T` for each gamma, with
/// standard errors. Replicas share `Phi` across gammas.
pub fn total_mass_study(setup: &ChaosSetup, gammas: &[f64], replicas: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let q0 = setup.q_zero()?;
    let vol = setup.grid.horizon();
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let phi = setup.phi(seed, r as u64)?;
            gammas
                .iter()
                .map(|&g| {
                    let th = wick_exponential(&phi, g, q0)?;
                    if th.clamped() > 0 {
                        return Err(Error::Numerical(format!("{} clamped cells", th.clamped())));
                    }
                    Ok(th.total_mass() / vol)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..gammas.len())
        .map(|k| mean_stderr(&rows.iter().map(|row| row[k]).collect::<Vec<_>>()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub gamma: f64,
    pub q: f64,
    pub fitted_exponent: f64,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    /// `E[Theta(B_r)^q]` per radius, with standard errors.
    pub moments: Vec<f64>,
    pub moment_stderr: Vec<f64>,
    pub replica_count: usize,
    /// Bootstrap standard error of the exponent.
    pub stderr: f64,
    /// Smallest effective sample size of the per-replica `q`-th powers.
    pub ess: f64,
    /// `q` within 20% of `8/gamma^2`.
    pub near_threshold: bool,
}

/// Options of the moment estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentOptions {
    /// Center time slices used per radius (spread over the admissible range).
    pub center_times: usize,
    /// Rescale each ball mass by continuum over lattice ball volume.
    pub volume_corrected: bool,
    pub bootstrap: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions { center_times: 4, volume_corrected: true, bootstrap: 200 }
    }
}

/// Minimum effective sample size accepted near the moment threshold.
pub const MIN_ESS: f64 = 100.0;

/// Fits `log E[Theta(B_s(z, r))^q]` against `log r` for every `(gamma, q)` in
/// `targets`, sharing the noise and `Phi_eps` across targets.
pub fn estimate_moment_exponents(
    setup: &ChaosSetup,
    targets: &[(f64, f64)],
    radii: &[f64],
    replicas: usize,
    seed: u64,
    opts: MomentOptions,
) -> Result<Vec<MomentFit>> {
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
    for &(g, q) in targets {
        moment_spectrum(g, q)?;
    }
    let q0 = setup.q_zero()?;
    let families = radii.iter().map(|&r| BallFamily::new(&grid, r)).collect::<Result<Vec<_>>>()?;
    let nt = grid.n_time();
    let centers: Vec<Vec<usize>> = families
        .iter()
        .map(|f| {
            if 2 * f.time_reach >= nt {
                return Err(Error::Domain(format!("radius {} needs more than {nt} slices", f.radius)));
            }
            let span = nt - 2 * f.time_reach;
            let k = opts.center_times.clamp(1, span);
            Ok((0..k).map(|i| f.time_reach + (2 * i + 1) * span / (2 * k)).collect())
        })
        .collect::<Result<_>>()?;
    let mut gammas: Vec<f64> = targets.iter().map(|t| t.0).collect();
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gammas.dedup();

    // one set of running spectra per gamma, reused across replicas
    let pool: Mutex<Vec<Vec<MassSpectra>>> = Mutex::new(Vec::new());
    let vol = grid.cell_volume();
    // rows[replica][target][radius]
    let rows: Vec<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut specs = pool
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| gammas.iter().map(|_| MassSpectra::empty(&grid)).collect());
            specs.iter_mut().for_each(|s| s.reset());
            let mut mass = vec![0.0; grid.slice_len()];
            let mut clamped = 0usize;
            setup.stream_phi(seed, rep as u64, &mut |_, phi| {
                for (g, spec) in gammas.iter().zip(specs.iter_mut()) {
                    let shift = -g * g * q0 / 2.0;
                    for (m, p) in mass.iter_mut().zip(phi) {
                        let e = g * p + shift;
                        if e.abs() > EXPONENT_CLAMP {
                            clamped += 1;
                        }
                        *m = e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp() * vol;
                    }
                    spec.push_slice(&mass);
                }
            })?;
            if clamped > 0 {
                return Err(Error::Numerical(format!("{clamped} clamped cells in replica {rep}")));
            }
            let mut out = vec![vec![0.0; radii.len()]; targets.len()];
            for (g, spec) in gammas.iter().zip(specs.iter_mut()) {
                spec.finish();
                for (ri, fam) in families.iter().enumerate() {
                    let corr = if opts.volume_corrected { fam.volume_correction(&grid) } else { 1.0 };
                    let masses: Vec<Vec<f64>> =
                        centers[ri].iter().map(|&it| fam.masses_at(spec, it)).collect::<Result<_>>()?;
                    for (ti, &(tg, q)) in targets.iter().enumerate() {
                        if tg != *g {
                            continue;
                        }
                        let pw: Vec<f64> = masses.iter().flatten().map(|m| (m * corr).powf(q)).collect();
                        out[ti][ri] = mean(&pw);
                    }
                }
            }
            pool.lock().unwrap().push(specs);
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let mut fits = Vec::with_capacity(targets.len());
    for (ti, &(gamma, q)) in targets.iter().enumerate() {
        let col = |ri: usize| rows.iter().map(|r| r[ti][ri]).collect::<Vec<f64>>();
        let mut moments = Vec::new();
        let mut moment_stderr = Vec::new();
        let mut ess = f64::INFINITY;
        for ri in 0..radii.len() {
            let c = col(ri);
            let (m, se) = mean_stderr(&c);
            moments.push(m);
            moment_stderr.push(se);
            ess = ess.min(effective_sample_size(&c));
        }
        let near_threshold = gamma > 0.0 && q >= 0.8 * q_critical(gamma);
        if near_threshold && ess < MIN_ESS {
            return Err(Error::Fit(format!(
                "effective sample size {ess:.1} below {MIN_ESS} for q = {q} near 8/gamma^2 = {}",
                q_critical(gamma)
            )));
        }
        let slope_of = |m: &[f64]| -> f64 {
            let y: Vec<f64> = m.iter().map(|v| v.ln()).collect();
            linear_fit(&log_r, &y).map(|f| f.slope).unwrap_or(f64::NAN)
        };
        let fitted_exponent = slope_of(&moments);
        let per_rep: Vec<&Vec<f64>> = rows.iter().map(|r| &r[ti]).collect();
        let stderr = bootstrap_stderr(&per_rep, opts.bootstrap, seed ^ ti as u64, |pick| {
            let m: Vec<f64> = (0..radii.len()).map(|ri| mean(&pick.iter().map(|r| r[ri]).collect::<Vec<_>>())).collect();
            slope_of(&m)
        });
        fits.push(MomentFit {
            gamma,
            q,
            fitted_exponent,
            radii: radii.clone(),
            moments,
            moment_stderr,
            replica_count: replicas,
            stderr,
            ess,
            near_threshold,
        });
    }
    Ok(fits)
}

pub fn estimate_moment_exponent(
    setup: &ChaosSetup,
    gamma: f64,
    q: f64,
    radii: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<MomentFit> {
    let mut v = estimate_moment_exponents(setup, &[(gamma, q)], radii, replicas, seed, MomentOptions::default())?;
    Ok(v.remove(0))
}

/// Lattice offset of a separation `z`, snapped to the nearest cell.
pub fn lattice_offset(grid: &TorusGrid, z: &SpaceTimePoint) -> (usize, i64, i64) {
    let lag = (z.t.abs() / grid.dt()).round() as usize;
    let n = grid.n_space() as f64;
    (lag, (z.x[0] * n).round() as i64, (z.x[1] * n).round() as i64)
}

/// Monte Carlo `E[density(y) density(y + z)]` over all admissible cells of
/// each sample; returns `(mean, stderr)` across samples.
pub fn pair_correlation(samples: &[GmcMeasure], z: &SpaceTimePoint) -> Result<(f64, f64)> {
    let first = samples.first().ok_or_else(|| Error::InvalidParameter("no samples".into()))?;
    let grid = *first.grid();
    let (lag, a, b) = lattice_offset(&grid, z);
    if lag >= grid.n_time() {
        return Err(Error::Domain(format!("time lag {lag} slices exceeds the window")));
    }
    let n = grid.n_space();
    let vol = grid.cell_volume();
    let per: Vec<f64> = samples
        .iter()
        .map(|th| {
            let m = th.masses.data();
            let mut terms = Vec::with_capacity((grid.n_time() - lag) * n * n);
            for it in 0..grid.n_time() - lag {
                for ix in 0..n {
                    let jx = (ix as i64 + a).rem_euclid(n as i64) as usize;
                    for iy in 0..n {
                        let jy = (iy as i64 + b).rem_euclid(n as i64) as usize;
                        terms.push(m[grid.index(it, ix, iy)] * m[grid.index(it + lag, jx, jy)] / (vol * vol));
                    }
                }
            }
            mean(&terms)
        })
        .collect();
    if per.len() < 2 {
        return Ok((per[0], f64::NAN));
    }
    Ok(mean_stderr(&per))
}

/// Fitted scaling of `E[<phi_x^lam, Theta>^N]` for a unit-mass bump `phi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingMomentFit {
    pub gamma: f64,
    pub order: u32,
    /// Slope of `log E[...]` against `log lam`.
    pub exponent: f64,
    /// `-gamma^2 N (N - 1) / 2`.
    pub bound: f64,
    pub scales: Vec<f64>,
    pub moments: Vec<f64>,
    pub moment_stderr: Vec<f64>,
}

/// Probes on the middle time slice, spaced by `lam` in space.
fn mid_probes(grid: &TorusGrid, lam: f64) -> Vec<SpaceTimePoint> {
    let n = grid.n_space();
    let step = ((lam / grid.dx()).floor() as usize).max(1);
    let it = grid.n_time() / 2;
    (0..n).step_by(step).flat_map(|ix| (0..n).step_by(step).map(move |iy| (ix, iy))).map(|(ix, iy)| grid.center_of(it, ix, iy)).collect()
}

/// Moments of `<phi_x^lam, Theta_eps>` of integer order `N < 8 / gamma^2`,
/// averaged over replicas and a spatial probe lattice.
pub fn pairing_moment_exponent(
    setup: &ChaosSetup,
    gamma: f64,
    order: u32,
    scales: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<PairingMomentFit> {
    if order < 1 || order as f64 >= q_critical(gamma) {
        return Err(Error::Domain(format!("moment order {order} outside [1, 8 / gamma^2)")));
    }
    if scales.len() < 3 || replicas < 2 {
        return Err(Error::Fit("need >= 3 scales and >= 2 replicas".into()));
    }
    let f = crate::besov::TestFunction::unit_mass();
    let q0 = setup.q_zero()?;
    let per: Vec<Vec<f64>> = (0..replicas)
        .map(|r| {
            let th = wick_exponential(&setup.phi(seed, r as u64)?, gamma, q0)?;
            scales
                .iter()
                .map(|&l| {
                    let p = crate::besov::pairings(&th, &f, l, &mid_probes(&setup.grid, l))?;
                    Ok(mean(&p.iter().map(|v| v.powi(order as i32)).collect::<Vec<_>>()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let (moments, moment_stderr): (Vec<f64>, Vec<f64>) =
        (0..scales.len()).map(|k| mean_stderr(&per.iter().map(|row| row[k]).collect::<Vec<_>>())).unzip();
    let x: Vec<f64> = scales.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    let nf = order as f64;
    Ok(PairingMomentFit {
        gamma,
        order,
        exponent: fit.slope,
        bound: -gamma * gamma * nf * (nf - 1.0) / 2.0,
        scales: scales.to_vec(),
        moments,
        moment_stderr,
    })
}

/// `E|<phi_x^lam, Theta_eps - Theta_{eps/2}>|^2` for each `eps`, with `Phi`
/// at both mollifier scales driven by the same noise. Returns
/// `(eps, mean, stderr)` rows in the order given.
pub fn l2_cauchy_study(
    setup: &ChaosSetup,
    gamma: f64,
    lam: f64,
    epsilons: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    if replicas < 2 {
        return Err(Error::Fit("need >= 2 replicas".into()));
    }
    let f = crate::besov::TestFunction::unit_mass();
    let probes = mid_probes(&setup.grid, lam);
    let at = |eps: f64| ChaosSetup { mollifier: setup.mollifier.with_epsilon(eps), ..*setup };
    let mut levels: Vec<f64> = epsilons.iter().flat_map(|&e| [e, e / 2.0]).collect();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * b.abs());
    let q0s = levels.iter().map(|&e| at(e).q_zero()).collect::<Result<Vec<_>>>()?;
    let level = |e: f64| levels.iter().position(|&l| (l - e).abs() < 1e-15 * e).expect("level listed");
    let per: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let pairs = levels
                .iter()
                .zip(&q0s)
                .map(|(&e, &q0)| {
                    let s = at(e);
                    let th = wick_exponential(&s.phi(seed, r as u64)?, gamma, q0)?;
                    crate::besov::pairings(&th, &f, lam, &probes)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(epsilons
                .iter()
                .map(|&e| {
                    let (a, b) = (&pairs[level(e)], &pairs[level(e / 2.0)]);
                    mean(&a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect::<Vec<_>>())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(epsilons
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let (m, se) = mean_stderr(&per.iter().map(|row| row[k]).collect::<Vec<_>>());
            (e, m, se)
        })
        .collect())
}
