//! The two solution paths for the regularized equation, in the time-changed
//! form `dX = 1/2 Delta X dt - 2 pi c_eps e^{gamma X} dt + sqrt(2 pi) xi_eps dt`:
//!
//! * [`simulate_epsilon`]: direct exponential-integrator stepping of `X`;
//! * [`dpd_solve`]: `X = Phi + v`, with `v` the Picard fixed point of
//!   `u -> K(-2 pi Theta e^{gamma u} - R) + P v0` on consecutive windows.
//!
//! Both use the same step `X_{n+1} = P_dt(X_n + dt (drift_n + sqrt(2 pi) xi_n))`
//! and the same renormalization constant, so they agree to Picard tolerance.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use liouville_core::error::{Error, Result};
use liouville_core::mollifier::MollifierSpec;
use liouville_core::punctures::{seiberg_check, GreenTable, Puncture, Surface};
use liouville_core::thresholds::{classify, gamma_dpd, gamma_pos, Regime};
use liouville_core::{Field, TorusGrid};

use crate::besov::{besov_sup_statistic, probe_lattice, TestFunction};
use crate::gmc::{c_rho_exponential, wick_exponential, GmcMeasure, EXPONENT_CLAMP};
use crate::heat::{covariance_at_zero, linear_solution, HeatKernelSpec, LinearOptions, LinearSolution};
use crate::noise::{mollifier_reach, sample_white_noise_with_margins};
use crate::spectral::Spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Exp,
    Sinh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverSurface {
    Torus,
    /// Accepted in configs, refused by the solvers.
    SpherePlanned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub gamma: f64,
    /// Only enters with punctures, as the `mu gamma / 2` prefactor.
    pub mu: f64,
    pub flavor: Flavor,
    pub punctures: Vec<Puncture>,
    pub surface: SolverSurface,
}

impl ModelParams {
    pub fn simple(gamma: f64, flavor: Flavor) -> Self {
        ModelParams { gamma, mu: 1.0, flavor, punctures: Vec::new(), surface: SolverSurface::Torus }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 2.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0, 2), got {}", self.gamma)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        if self.surface == SolverSurface::SpherePlanned {
            return Err(Error::Domain("sphere dynamics are not simulated; only the sphere kernels are".into()));
        }
        if !self.punctures.is_empty() {
            if self.flavor != Flavor::Exp {
                return Err(Error::InvalidParameter("punctures need the exp flavor".into()));
            }
            let rep = seiberg_check(self.gamma, &self.punctures, Surface::Torus)?;
            if !rep.ok {
                return Err(Error::OutOfRegime(format!(
                    "Seiberg bound violated: {}",
                    rep.violated.unwrap_or_default()
                )));
            }
        }
        Ok(())
    }

    /// `mu gamma / 2` with punctures, 1 otherwise.
    fn prefactor(&self) -> f64 {
        if self.punctures.is_empty() { 1.0 } else { 0.5 * self.mu * self.gamma }
    }

    /// `pi alpha_1` (unit torus volume), after the time change.
    fn constant_drift(&self) -> f64 {
        self.punctures.iter().map(|p| PI * p.alpha).sum()
    }

    fn regime(&self) -> Regime {
        classify(self.gamma, self.punctures.first().map(|p| p.alpha))
    }
}

/// Which part of the phase diagram a DPD run may claim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `gamma < gamma_dPD`: convergence claims.
    Strict,
    /// `gamma < gamma_pos`: strong solution only.
    Extended,
}

/// Constant in front of `e^{gamma X}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Renormalization {
    /// `exp(-gamma^2 Q_eps(0) / 2)`, exact on the lattice.
    Wick,
    /// `C_rho eps^{gamma^2 / 2}` with a measured `C_rho`.
    CRho(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Horizon is `grid.horizon()`; slice `n` holds time `n dt`.
    pub grid: TorusGrid,
    pub epsilon: f64,
    pub seed: u64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Picard window `t(M)`.
    pub window: f64,
    pub mode: ThresholdMode,
    pub kernel: HeatKernelSpec,
    pub renormalization: Renormalization,
}

impl SolverConfig {
    pub fn new(grid: TorusGrid, epsilon: f64, seed: u64) -> Self {
        SolverConfig {
            grid,
            epsilon,
            seed,
            picard_tol: 1e-10,
            picard_max_iter: 60,
            window: grid.horizon() / 4.0,
            mode: ThresholdMode::Strict,
            kernel: HeatKernelSpec::default(),
            renormalization: Renormalization::Wick,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn mollifier(&self) -> MollifierSpec {
        MollifierSpec::bump(self.epsilon)
    }

    fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidParameter("picard_tol must be positive".into()));
        }
        if !(self.window > 0.0) {
            return Err(Error::InvalidParameter("Picard window must be positive".into()));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::InvalidParameter("picard_max_iter must be >= 1".into()));
        }
        Ok(())
    }

    fn coefficient(&self, gamma: f64) -> Result<f64> {
        Ok(match self.renormalization {
            Renormalization::Wick => {
                let q0 = covariance_at_zero(&self.mollifier(), &self.kernel, &self.grid)?;
                (-gamma * gamma * q0 / 2.0).exp()
            }
            Renormalization::CRho(c) => {
                if !(c > 0.0) {
                    return Err(Error::InvalidParameter(format!("C_rho must be positive, got {c}")));
                }
                c * self.epsilon.powf(gamma * gamma / 2.0)
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `sup |drift|` per step.
    pub drift_max: Vec<f64>,
    pub clamped: usize,
    pub picard_iterations: Vec<usize>,
    /// Per window.
    pub contraction_ratios: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Field,
    /// `X - Phi` for DPD runs.
    pub v: Option<Field>,
    pub phi: Option<Field>,
    pub diagnostics: Diagnostics,
    /// Set in extended mode: no epsilon-convergence claim.
    pub label: Option<String>,
}

/// `e^{dt Delta / 2}` on slices, reusing one FFT plan.
struct HeatStep {
    sp: Spectral,
    decay: Vec<f64>,
    buf: Vec<Complex64>,
}

impl HeatStep {
    fn new(n: usize, dt: f64) -> Self {
        let sp = Spectral::new(n);
        let decay = sp.k2().iter().map(|&k2| (-2.0 * PI * PI * k2 * dt).exp()).collect();
        HeatStep { sp, decay, buf: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        self.sp.forward_into(x, &mut self.buf);
        for (c, d) in self.buf.iter_mut().zip(&self.decay) {
            *c *= d;
        }
        self.sp.inverse_into(&mut self.buf, out);
    }
}

/// Drift `2 pi x` the nonlinearity, as a function of the exponent weights.
#[derive(Clone, Copy, Debug)]
struct Drift {
    gamma: f64,
    flavor: Flavor,
    /// `2 pi * prefactor * c_eps`.
    scale: f64,
    constant: f64,
}

impl Drift {
    fn new(params: &ModelParams, c_eps: f64) -> Self {
        Drift {
            gamma: params.gamma,
            flavor: params.flavor,
            scale: 2.0 * PI * params.prefactor() * c_eps,
            constant: params.constant_drift(),
        }
    }

    /// Direct form: `w` is the spatial weight, `x` the field value.
    fn direct(&self, w: f64, x: f64, clamped: &mut usize) -> f64 {
        let mut e = |s: f64| {
            let a = s * self.gamma * x;
            if a.abs() > EXPONENT_CLAMP || !a.is_finite() {
                *clamped += 1;
            }
            a.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp()
        };
        match self.flavor {
            Flavor::Exp => -self.scale * w * e(1.0) + self.constant,
            Flavor::Sinh => {
                let (a, b) = (e(1.0), e(-1.0));
                -self.scale * 0.5 * (a - b) + self.constant
            }
        }
    }
}

/// Ingredients of the fixed-point map on one noise realization.
#[derive(Clone, Debug)]
pub struct DpdData {
    /// Renormalized `e^{gamma Phi}` (puncture-weighted when applicable).
    pub theta: GmcMeasure,
    /// Renormalized `e^{-gamma Phi}` for the sinh flavor.
    pub theta_minus: Option<GmcMeasure>,
    pub r_field: Field,
    gamma: f64,
    flavor: Flavor,
    /// `2 pi * prefactor`; the renormalization sits inside `theta`.
    scale: f64,
    constant: f64,
}

impl DpdData {
    pub fn new(params: &ModelParams, theta: GmcMeasure, theta_minus: Option<GmcMeasure>, r_field: Field) -> Result<Self> {
        if params.flavor == Flavor::Sinh && theta_minus.is_none() {
            return Err(Error::InvalidParameter("sinh flavor needs theta_minus".into()));
        }
        if theta.grid() != r_field.grid() {
            return Err(Error::InvalidParameter("theta and R live on different grids".into()));
        }
        Ok(DpdData {
            theta,
            theta_minus,
            r_field,
            gamma: params.gamma,
            flavor: params.flavor,
            scale: 2.0 * PI * params.prefactor(),
            constant: params.constant_drift(),
        })
    }
}

/// Output of one application of the fixed-point map.
#[derive(Clone, Debug)]
pub struct FixedPointImage {
    pub field: Field,
    pub clamped: usize,
}

fn window_grid(grid: &TorusGrid, start: usize, len: usize) -> Result<TorusGrid> {
    TorusGrid::with_origin(grid.n_space(), len, grid.dt(), grid.t0() + start as f64 * grid.dt())
}

/// `u -> K(-2 pi Theta e^{gamma u} - R) + P(v0)` on the slices covered by
/// `u` (a window whose origin is a slice of the data grid; slice 0 is `v0`).
/// `Theta e^{gamma u}` is the cell-wise positive product. `R` enters the
/// recursion exactly as in `Phi_{n+1} = P(Phi_n + sqrt(2 pi) dt xi_n) + dt R_n`.
pub fn fixed_point_map(data: &DpdData, u: &Field, v0: &[f64]) -> Result<FixedPointImage> {
    let mut step = HeatStep::new(u.grid().n_space(), u.grid().dt());
    fixed_point_map_with(data, u, v0, &mut step)
}

fn fixed_point_map_with(data: &DpdData, u: &Field, v0: &[f64], step: &mut HeatStep) -> Result<FixedPointImage> {
    let g = *data.theta.grid();
    let w = *u.grid();
    if w.n_space() != g.n_space() || (w.dt() - g.dt()).abs() > 1e-15 * g.dt() {
        return Err(Error::InvalidParameter("window lattice differs from the data lattice".into()));
    }
    let start = ((w.t0() - g.t0()) / g.dt()).round() as usize;
    if start + w.n_time() > g.n_time() || w.t0() < g.t0() - 1e-12 {
        return Err(Error::Domain(format!(
            "window end {} beyond the horizon {}",
            w.t0() + w.horizon(),
            g.t0() + g.horizon()
        )));
    }
    if v0.len() != g.slice_len() {
        return Err(Error::InvalidParameter("v0 must be one spatial slice".into()));
    }
    let dt = g.dt();
    let inv_vol = 1.0 / g.cell_volume();
    let mut out = Field::zeros(w);
    out.slice_mut(0).copy_from_slice(v0);
    let mut clamped = 0usize;
    let mut buf = vec![0.0; g.slice_len()];
    let expo = |a: f64, clamped: &mut usize| {
        if a.abs() > EXPONENT_CLAMP || !a.is_finite() {
            *clamped += 1;
        }
        a.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp()
    };
    for k in 0..w.n_time() - 1 {
        let it = start + k;
        let th = data.theta.masses().slice(it);
        let un = u.slice(k);
        let prev = out.slice(k);
        match (data.flavor, &data.theta_minus) {
            (Flavor::Sinh, Some(tm)) => {
                let tm = tm.masses().slice(it);
                for i in 0..buf.len() {
                    let a = th[i] * expo(data.gamma * un[i], &mut clamped);
                    let b = tm[i] * expo(-data.gamma * un[i], &mut clamped);
                    buf[i] = prev[i] + dt * (-data.scale * 0.5 * (a - b) * inv_vol + data.constant);
                }
            }
            _ => {
                for i in 0..buf.len() {
                    let a = th[i] * expo(data.gamma * un[i], &mut clamped);
                    buf[i] = prev[i] + dt * (-data.scale * a * inv_vol + data.constant);
                }
            }
        }
        let r = data.r_field.slice(it);
        let next = out.slice_mut(k + 1);
        step.apply(&buf, next);
        for (x, rv) in next.iter_mut().zip(r) {
            *x -= dt * rv;
        }
    }
    Ok(FixedPointImage { field: out, clamped })
}

#[derive(Clone, Debug)]
pub struct PicardResult {
    pub v: Field,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    pub residual: f64,
}

fn sup_diff(a: &Field, b: &Field) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Picard iteration from `u_0 = P(v0)` on the window of `slices` slices
/// starting at slice `start` (both ends included: `slices + 1` levels).
pub fn picard_solve(data: &DpdData, v0: &[f64], start: usize, slices: usize, config: &SolverConfig) -> Result<PicardResult> {
    config.validate()?;
    let g = *data.theta.grid();
    let w = window_grid(&g, start, slices + 1)?;
    let mut step = HeatStep::new(g.n_space(), g.dt());
    let mut u = Field::zeros(w);
    u.slice_mut(0).copy_from_slice(v0);
    let mut tmp = vec![0.0; g.slice_len()];
    for k in 1..=slices {
        let prev = u.slice(k - 1).to_vec();
        step.apply(&prev, &mut tmp);
        u.slice_mut(k).copy_from_slice(&tmp);
    }
    let mut ratios = Vec::new();
    let mut last_inc: Option<f64> = None;
    let mut over = 0usize;
    for iter in 1..=config.picard_max_iter {
        let img = fixed_point_map_with(data, &u, v0, &mut step)?;
        if img.clamped > 0 {
            return Err(Error::Numerical(format!("{} clamped exponents in Picard iteration {iter}", img.clamped)));
        }
        let inc = sup_diff(&img.field, &u);
        u = img.field;
        if let Some(p) = last_inc {
            if p > 0.0 {
                let r = inc / p;
                ratios.push(r);
                over = if r >= 1.0 { over + 1 } else { 0 };
                if over >= 3 {
                    return Err(Error::WindowTooLarge { ratio: r, suggested: slices as f64 * g.dt() / 2.0 });
                }
            }
        }
        if inc < config.picard_tol {
            return Ok(PicardResult { v: u, iterations: iter, contraction_ratios: ratios, residual: inc });
        }
        last_inc = Some(inc);
    }
    Err(Error::Numerical(format!("Picard did not reach {} in {} iterations", config.picard_tol, config.picard_max_iter)))
}

/// Noise, `Phi_eps`, `xi_eps` and `R_eps` with margins of at least `margin` slices.
fn linear_part(config: &SolverConfig, margin: usize) -> Result<LinearSolution> {
    let m = config.mollifier();
    let h = mollifier_reach(&m, &config.grid)?.max(margin);
    let noise = sample_white_noise_with_margins(&config.grid, config.seed, h, h);
    linear_solution(&noise, &m, &config.kernel, LinearOptions::ALL)
}

fn spatial_weight(params: &ModelParams, n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n * n];
    for p in &params.punctures {
        let t = GreenTable::new(n, p.position);
        for (x, g) in w.iter_mut().zip(&t.values) {
            *x *= (params.gamma * p.alpha * g).exp();
        }
    }
    w
}

/// Direct stepping of `X_eps` from `Phi_eps(0) + w`.
pub fn simulate_epsilon(params: &ModelParams, config: &SolverConfig, w: &[f64]) -> Result<Trajectory> {
    simulate_with_margin(params, config, w, 0)
}

fn simulate_with_margin(params: &ModelParams, config: &SolverConfig, w: &[f64], margin: usize) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    let g = config.grid;
    if w.len() != g.slice_len() {
        return Err(Error::InvalidParameter("initial condition must be one spatial slice".into()));
    }
    let lin = linear_part(config, margin)?;
    let xi = lin.xi_eps.as_ref().expect("requested");
    let drift = Drift::new(params, config.coefficient(params.gamma)?);
    let weight = spatial_weight(params, g.n_space());
    let mut step = HeatStep::new(g.n_space(), g.dt());
    let dt = g.dt();
    let root = (2.0 * PI).sqrt();
    let mut x = Field::zeros(g);
    for (o, (p, wv)) in x.slice_mut(0).iter_mut().zip(lin.phi.slice(0).iter().zip(w)) {
        *o = p + wv;
    }
    let mut diag = Diagnostics::default();
    let mut buf = vec![0.0; g.slice_len()];
    for n in 0..g.n_time() - 1 {
        let xn = x.slice(n);
        let mut dmax: f64 = 0.0;
        for i in 0..buf.len() {
            let d = drift.direct(weight[i], xn[i], &mut diag.clamped);
            dmax = dmax.max(d.abs());
            buf[i] = xn[i] + dt * (d + root * xi.slice(n)[i]);
        }
        if diag.clamped > 0 || !dmax.is_finite() {
            return Err(Error::Numerical(format!("blow-up at step {n} (t = {}): exponent beyond the clamp", n as f64 * dt)));
        }
        diag.drift_max.push(dmax);
        step.apply(&buf, x.slice_mut(n + 1));
    }
    Ok(Trajectory { times: times(&g), x, v: None, phi: Some(lin.phi), diagnostics: diag, label: None })
}

fn times(g: &TorusGrid) -> Vec<f64> {
    (0..g.n_time()).map(|n| g.t0() + n as f64 * g.dt()).collect()
}

/// Refuses `gamma` outside the mode's part of the phase diagram.
pub fn check_mode(params: &ModelParams, mode: ThresholdMode) -> Result<Option<String>> {
    let regime = params.regime();
    match (mode, regime) {
        (ThresholdMode::Strict, Regime::DpdConvergent) => Ok(None),
        (ThresholdMode::Extended, Regime::DpdConvergent) => Ok(None),
        (ThresholdMode::Extended, Regime::PositivityStrong) => {
            Ok(Some("strong-solution mode, no epsilon-convergence claim".into()))
        }
        (ThresholdMode::Strict, Regime::PositivityStrong) => Err(Error::OutOfRegime(format!(
            "gamma = {} is {}: strict mode needs gamma < gamma_dPD = {:.6} (use extended mode up to gamma_pos = {:.6})",
            params.gamma,
            regime.label(),
            gamma_dpd(),
            gamma_pos()
        ))),
        (_, Regime::Beyond) => Err(Error::OutOfRegime(format!(
            "gamma = {} is {}: no fixed-point theory beyond gamma_pos = {:.6}",
            params.gamma,
            regime.label(),
            gamma_pos()
        ))),
    }
}

/// `X = Phi + v` with `v` solved window by window.
pub fn dpd_solve(params: &ModelParams, config: &SolverConfig, w: &[f64]) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    let label = check_mode(params, config.mode)?;
    let g = config.grid;
    if w.len() != g.slice_len() {
        return Err(Error::InvalidParameter("initial condition must be one spatial slice".into()));
    }
    let lin = linear_part(config, 0)?;
    let r = lin.r_field.clone().expect("requested");
    let data = dpd_data(params, config, &lin.phi, r)?;
    let per = ((config.window / g.dt()).round() as usize).max(1);
    let mut v = Field::zeros(g);
    v.slice_mut(0).copy_from_slice(w);
    let mut diag = Diagnostics::default();
    let mut start = 0;
    while start + 1 < g.n_time() {
        let len = per.min(g.n_time() - 1 - start);
        let v0 = v.slice(start).to_vec();
        let res = picard_solve(&data, &v0, start, len, config)?;
        for k in 1..=len {
            v.slice_mut(start + k).copy_from_slice(res.v.slice(k));
        }
        diag.picard_iterations.push(res.iterations);
        diag.contraction_ratios.push(res.contraction_ratios);
        start += len;
    }
    let x = lin.phi.zip_with(&v, |a, b| a + b);
    Ok(Trajectory { times: times(&g), x, v: Some(v), phi: Some(lin.phi), diagnostics: diag, label })
}

/// `Theta` (and `Theta_-`) for a given `Phi`, renormalized as configured.
pub fn dpd_data(params: &ModelParams, config: &SolverConfig, phi: &Field, r_field: Field) -> Result<DpdData> {
    let gamma = params.gamma;
    let build = |f: &Field| -> Result<GmcMeasure> {
        match config.renormalization {
            Renormalization::Wick => {
                wick_exponential(f, gamma, covariance_at_zero(&config.mollifier(), &config.kernel, &config.grid)?)
            }
            Renormalization::CRho(c) => c_rho_exponential(f, gamma, config.epsilon, c),
        }
    };
    let mut theta = build(phi)?;
    if !params.punctures.is_empty() {
        theta = crate::punctures::weighted_measure(&theta, &params.punctures, gamma)?;
    }
    let theta_minus = match params.flavor {
        Flavor::Sinh => Some(build(&phi.map(|p| -p))?),
        Flavor::Exp => None,
    };
    DpdData::new(params, theta, theta_minus, r_field)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps_coarse: f64,
    pub eps_fine: f64,
    pub sup_x: f64,
    pub sup_v: f64,
    /// `max_lam lam * sup_z |<X_a - X_b, S_z^lam f>|`, a `C^{-1}` proxy.
    pub besov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Besov distances strictly decreasing down the table.
    pub decreasing: bool,
}

/// Scales of the `C^{-1}` distance.
pub fn distance_scales(grid: &TorusGrid) -> Vec<f64> {
    let lo = crate::besov::MIN_SCALE_CELLS * grid.resolution();
    let hi = (0.25f64).min((grid.horizon() * 4.0 / 3.0).sqrt());
    let mut v = Vec::new();
    let mut l = hi;
    while l >= lo * (1.0 - 1e-9) {
        v.push(l);
        l /= 2.0;
    }
    v
}

/// `C^{-1}` proxy distance between two fields on one grid.
pub fn besov_distance(a: &Field, b: &Field, scales: &[f64]) -> Result<f64> {
    let d = a.zip_with(b, |x, y| x - y);
    let f = TestFunction::normalized(crate::besov::Profile::Bump, 2);
    let mut best: f64 = 0.0;
    for &l in scales {
        let probes = probe_lattice(a.grid(), l)?;
        best = best.max(l * besov_sup_statistic(&d, &f, l, &probes)?);
    }
    Ok(best)
}

/// Runs the direct scheme at each `epsilon` on shared noise and compares
/// consecutive levels. `epsilons` must be strictly decreasing.
pub fn convergence_study(params: &ModelParams, config: &SolverConfig, epsilons: &[f64], w: &[f64]) -> Result<ConvergenceReport> {
    check_mode(params, ThresholdMode::Strict)?;
    if epsilons.len() < 2 || epsilons.windows(2).any(|p| !(p[1] <= p[0])) {
        return Err(Error::InvalidParameter("need >= 2 non-increasing epsilons".into()));
    }
    let margin = mollifier_reach(&MollifierSpec::bump(epsilons[0]), &config.grid)?;
    let scales = distance_scales(&config.grid);
    let mut prev: Option<(f64, Trajectory)> = None;
    let mut rows = Vec::new();
    for &e in epsilons {
        let cfg = SolverConfig { epsilon: e, ..*config };
        let tr = simulate_with_margin(params, &cfg, w, margin)?;
        if let Some((pe, pt)) = prev.take() {
            let v_a = pt.x.zip_with(pt.phi.as_ref().expect("kept"), |x, p| x - p);
            let v_b = tr.x.zip_with(tr.phi.as_ref().expect("kept"), |x, p| x - p);
            rows.push(ConvergenceRow {
                eps_coarse: pe,
                eps_fine: e,
                sup_x: sup_diff(&pt.x, &tr.x),
                sup_v: sup_diff(&v_a, &v_b),
                besov: besov_distance(&pt.x, &tr.x, &scales)?,
            });
        }
        prev = Some((e, tr));
    }
    let decreasing = rows.windows(2).all(|p| p[1].besov < p[0].besov);
    Ok(ConvergenceReport { rows, decreasing })
}
