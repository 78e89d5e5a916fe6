//! Heat semigroup, Duhamel integral, the linear solution `Phi_eps = sqrt(2 pi) K * xi_eps`
//! and its exact lattice covariance.
//!
//! Time stepping is per Fourier mode `k` with `a_k = exp(-2 pi^2 |k|^2 dt)`:
//! `Phi_{n+1} = a_k (Phi_n + sqrt(2 pi) dt xi_eps,n)`, i.e. the lattice kernel
//! at lag `j` is `chi((j+1) dt) a_k^{j+1}`. The cutoff `chi` only matters for
//! modes with `pi^2 |k|^2 c <= 40`; those ("low" modes) are filtered exactly
//! with a finite impulse response reaching back `c / dt` slices, using noise
//! history drawn directly in Fourier space before the realization's first
//! slice. All other modes run the plain recursion, with the noise before the
//! first slice folded into one exactly distributed Gaussian term.

use std::collections::HashMap;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use liouville_core::error::{Error, Result};
use liouville_core::geometry::SpaceTimePoint;
use liouville_core::mollifier::{MollifierKernel, MollifierSpec};
use liouville_core::rng::{fill_normals, normal, stream};
use liouville_core::stats::linear_fit;
use liouville_core::{Field, TorusGrid};

use crate::conv::convolve;
use crate::noise::NoiseRealization;
use crate::spectral::{wavenumber, Spectral};

pub const DEFAULT_TIME_CUTOFF: f64 = 0.25;
const TAIL_STREAM: u64 = 0x7A11_0000_0000_0001;

fn deep_stream(s: i64) -> u64 {
    s as u64 ^ (1 << 61)
}

/// Truncated heat kernel `K(t) = chi(t) p_t`: exact for `t <= c/2`, zero for `t >= c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernelSpec {
    pub time_cutoff: f64,
}

impl Default for HeatKernelSpec {
    fn default() -> Self {
        HeatKernelSpec { time_cutoff: DEFAULT_TIME_CUTOFF }
    }
}

fn edge(s: f64) -> f64 {
    if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() }
}

/// `C^infinity` step: 0 for `s <= 0`, 1 for `s >= 1`.
pub fn smooth_step(s: f64) -> f64 {
    let a = edge(s);
    let b = edge(1.0 - s);
    a / (a + b)
}

impl HeatKernelSpec {
    pub fn new(time_cutoff: f64) -> Result<Self> {
        if !(time_cutoff > 0.0 && time_cutoff <= 2.0) {
            return Err(Error::InvalidParameter(format!("time cutoff {time_cutoff} outside (0, 2]")));
        }
        Ok(HeatKernelSpec { time_cutoff })
    }

    /// The window `chi(t)`.
    pub fn window(&self, t: f64) -> f64 {
        let half = self.time_cutoff / 2.0;
        1.0 - smooth_step((t - half) / half)
    }

    /// Modes with `|k|^2` up to this value feel the cutoff.
    pub fn low_mode_bound(&self) -> f64 {
        (40.0 / (PI * PI * self.time_cutoff)).ceil()
    }

    /// Number of lattice lags with nonzero weight.
    pub fn taps(&self, dt: f64) -> usize {
        (self.time_cutoff / dt).ceil() as usize
    }

    /// Lattice kernel `chi((j+1) dt) a^{j+1}` for `j < taps`.
    pub fn impulse(&self, dt: f64, a: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.taps(dt));
        let mut p = a;
        for j in 0..self.taps(dt) {
            out.push(self.window((j + 1) as f64 * dt) * p);
            p *= a;
        }
        out
    }
}

fn decay(k2: f64, s: f64) -> f64 {
    (-2.0 * PI * PI * k2 * s).exp()
}

/// `e^{s Delta / 2}` on one spatial slice: mode `k` scales by `exp(-2 pi^2 |k|^2 s)`.
pub fn propagate(v: &[f64], n: usize, s: f64) -> Result<Vec<f64>> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("propagation time {s} must be >= 0")));
    }
    if v.len() != n * n {
        return Err(Error::InvalidParameter("slice length is not n^2".into()));
    }
    let sp = Spectral::new(n);
    let k2 = sp.k2().to_vec();
    Ok(sp.apply_symbol(v, |i| decay(k2[i], s)))
}

/// Discrete Duhamel integral `K(f)(s) = int_0^s e^{u Delta/2} f(s-u) du`:
/// `v_0 = 0`, `v_{n+1} = P_dt (v_n + dt f_n)`; slice `n` of the output is `v_n`.
pub fn duhamel(f: &Field) -> Field {
    let grid = *f.grid();
    let n = grid.n_space();
    let dt = grid.dt();
    let sp = Spectral::new(n);
    let a: Vec<f64> = sp.k2().iter().map(|&k2| decay(k2, dt)).collect();
    let mut out = Field::zeros(grid);
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    for it in 1..grid.n_time() {
        sp.forward_into(f.slice(it - 1), &mut buf);
        for ((vk, fk), ak) in v.iter_mut().zip(&buf).zip(&a) {
            *vk = (*vk + fk * dt) * ak;
        }
        buf.copy_from_slice(&v);
        sp.inverse_into(&mut buf, out.slice_mut(it));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearOptions {
    pub keep_xi: bool,
    pub keep_r: bool,
}

impl LinearOptions {
    pub const ALL: LinearOptions = LinearOptions { keep_xi: true, keep_r: true };
    pub const PHI_ONLY: LinearOptions = LinearOptions { keep_xi: false, keep_r: false };
}

/// `Phi_eps` on the noise grid, with the mollified noise `xi_eps` and the
/// smooth correction `R_n = (Phi_{n+1} - P_dt(Phi_n + sqrt(2 pi) dt xi_eps,n)) / dt`
/// when requested. Slice `n` holds time level `n dt`.
#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub phi: Field,
    pub xi_eps: Option<Field>,
    pub r_field: Option<Field>,
    pub mollifier: MollifierSpec,
    pub kernel: HeatKernelSpec,
}

pub fn linear_solution_phi(noise: &NoiseRealization, m: &MollifierSpec, kspec: &HeatKernelSpec) -> Result<LinearSolution> {
    linear_solution(noise, m, kspec, LinearOptions::ALL)
}

pub fn linear_solution(
    noise: &NoiseRealization,
    m: &MollifierSpec,
    kspec: &HeatKernelSpec,
    opts: LinearOptions,
) -> Result<LinearSolution> {
    let grid = *noise.grid();
    let mk = MollifierKernel::tabulate(m, &grid)?;
    let h = mk.half_time;
    if noise.lead() < h || noise.trail() < h {
        return Err(Error::InvalidParameter(format!(
            "noise margins ({}, {}) must cover the mollifier reach {h}",
            noise.lead(),
            noise.trail()
        )));
    }
    let n = grid.n_space();
    let nn = n * n;
    let slots = noise.lead() + grid.n_time() + noise.trail();
    let lead = noise.lead() as i64;
    let sp = Spectral::new(n);
    // raw half spectra of every noise slot, two slots per complex transform
    let hn = sp.half_len();
    let mut raw = vec![Complex64::new(0.0, 0.0); slots * hn];
    {
        let mut buf = vec![Complex64::new(0.0, 0.0); nn];
        let zeros = vec![0.0; nn];
        let (mut s0, mut rest) = (0usize, &mut raw[..]);
        while s0 < slots {
            let (a, tail) = rest.split_at_mut(hn);
            let second = if s0 + 1 < slots { noise.slice(s0 as i64 + 1 - lead) } else { &zeros[..] };
            if s0 + 1 < slots {
                let (b, tail) = tail.split_at_mut(hn);
                sp.forward_pair_half(noise.slice(s0 as i64 - lead), second, &mut buf, a, b);
                rest = tail;
            } else {
                let mut b = vec![Complex64::new(0.0, 0.0); hn];
                sp.forward_pair_half(noise.slice(s0 as i64 - lead), second, &mut buf, a, &mut b);
                rest = tail;
            }
            s0 += 2;
        }
    }
    let mut src = FullRaw { hn, lead, slots, raw };
    let mut phi = Field::zeros(grid);
    let mut xi = opts.keep_xi.then(|| Field::zeros(grid));
    let mut r = opts.keep_r.then(|| Field::zeros(grid));
    {
        let mut phi_sink = |it: usize, v: &[f64]| phi.slice_mut(it).copy_from_slice(v);
        let mut xi_sink = xi.as_mut().map(|f| move |it: usize, v: &[f64]| f.slice_mut(it).copy_from_slice(v));
        let mut r_sink = r.as_mut().map(|f| move |it: usize, v: &[f64]| f.slice_mut(it).copy_from_slice(v));
        let ctx = LinearContext::new(&grid, &sp, &mk, kspec, noise.seed(), noise.lead(), noise.sigma());
        ctx.run(
            &mut src,
            &mut phi_sink,
            xi_sink.as_mut().map(|s| s as &mut dyn FnMut(usize, &[f64])),
            r_sink.as_mut().map(|s| s as &mut dyn FnMut(usize, &[f64])),
        );
    }
    Ok(LinearSolution { phi, xi_eps: xi, r_field: r, mollifier: *m, kernel: *kspec })
}

fn spectral_stream(s: i64) -> u64 {
    s as u64 ^ (1 << 60)
}

/// Noise spectra in time order, as the recursion consumes them.
trait RawSource {
    /// `out = sum_i w_i raw(m + h - i)`, with zero outside the available slots.
    fn filtered(&mut self, m: i64, w: &[f64], out: &mut [Complex64]);
    /// Raw coefficients of modes `lows` on slots `-lead .. end`.
    fn low_series(&mut self, lows: &[usize], end: i64) -> Vec<Vec<Complex64>>;
}

/// Half spectra of every slot.
struct FullRaw {
    hn: usize,
    lead: i64,
    slots: usize,
    raw: Vec<Complex64>,
}

impl FullRaw {
    fn at(&self, t: i64) -> Option<&[Complex64]> {
        let slot = t + self.lead;
        if slot < 0 || slot >= self.slots as i64 {
            None
        } else {
            Some(&self.raw[slot as usize * self.hn..(slot as usize + 1) * self.hn])
        }
    }
}

impl RawSource for FullRaw {
    fn filtered(&mut self, m: i64, w: &[f64], out: &mut [Complex64]) {
        let h = (w.len() / 2) as i64;
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (i, &wi) in w.iter().enumerate() {
            if let Some(r) = self.at(m + h - i as i64) {
                for (b, x) in out.iter_mut().zip(r) {
                    *b += x * wi;
                }
            }
        }
    }

    fn low_series(&mut self, lows: &[usize], end: i64) -> Vec<Vec<Complex64>> {
        lows.iter().map(|&k| (-self.lead..end).map(|t| self.at(t).unwrap()[k]).collect()).collect()
    }
}

/// Hermitian Gaussian spectra generated slot by slot into a ring of `2h + 1`
/// half spectra. Low modes come from the per-slot low-mode streams instead.
struct SpectralRing {
    n: usize,
    seed: u64,
    lead: i64,
    end: i64,
    scale: f64,
    ring: Vec<Vec<Complex64>>,
    /// Time held by each ring entry.
    held: Vec<Option<i64>>,
    normals: Vec<f64>,
}

impl SpectralRing {
    fn fill(&mut self, t: i64) -> usize {
        let cap = self.ring.len() as i64;
        let idx = t.rem_euclid(cap) as usize;
        if self.held[idx] == Some(t) {
            return idx;
        }
        let n = self.n;
        fill_normals(self.seed, spectral_stream(t), &mut self.normals);
        let chunk = &mut self.ring[idx];
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut next = 0;
        for i in 0..n {
            let ic = (n - i) % n;
            for j in 0..n {
                let jc = (n - j) % n;
                let (k, kc) = (i * n + j, ic * n + jc);
                let hn = chunk.len();
                if k == kc {
                    chunk[k] = Complex64::new(self.scale * self.normals[next], 0.0);
                    next += 1;
                } else if k < kc {
                    let z = Complex64::new(self.normals[next], self.normals[next + 1]) * (self.scale * r2);
                    next += 2;
                    chunk[k] = z;
                    if kc < hn {
                        chunk[kc] = z.conj();
                    }
                }
            }
        }
        self.held[idx] = Some(t);
        idx
    }
}

impl RawSource for SpectralRing {
    fn filtered(&mut self, m: i64, w: &[f64], out: &mut [Complex64]) {
        let h = (w.len() / 2) as i64;
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (i, &wi) in w.iter().enumerate() {
            let t = m + h - i as i64;
            if t < -self.lead || t >= self.end {
                continue;
            }
            let idx = self.fill(t);
            for (b, x) in out.iter_mut().zip(&self.ring[idx]) {
                *b += x * wi;
            }
        }
    }

    fn low_series(&mut self, lows: &[usize], end: i64) -> Vec<Vec<Complex64>> {
        let mut is_low = vec![false; self.n * self.n];
        for &k in lows {
            is_low[k] = true;
        }
        let deep = deep_history(self.seed, self.n, &is_low, -self.lead, end, self.scale);
        lows.iter().map(|k| deep[k].clone()).collect()
    }
}

/// `Phi_eps` driven by lattice white noise sampled directly in Fourier space
/// (Hermitian complex Gaussians per slot). Same law as [`linear_solution`]
/// on [`crate::noise::sample_white_noise_with_margins`], but a different
/// realization for the same seed; used where only the law matters (chaos
/// replicas). Slices go to `sink` in time order, nothing of size `n_time`
/// is allocated.
pub fn stream_phi_spectral(
    grid: &TorusGrid,
    seed: u64,
    m: &MollifierSpec,
    kspec: &HeatKernelSpec,
    sink: &mut dyn FnMut(usize, &[f64]),
) -> Result<()> {
    let mk = MollifierKernel::tabulate(m, grid)?;
    let h = mk.half_time;
    let n = grid.n_space();
    let nn = n * n;
    let sigma = crate::noise::noise_sigma(grid);
    let mut src = SpectralRing {
        n,
        seed,
        lead: h as i64,
        end: (grid.n_time() + h) as i64,
        scale: n as f64 * sigma,
        ring: vec![vec![Complex64::new(0.0, 0.0); (n / 2 + 1) * n]; 2 * h + 1],
        held: vec![None; 2 * h + 1],
        normals: vec![0.0; nn],
    };
    let sp = Spectral::new(n);
    LinearContext::new(grid, &sp, &mk, kspec, seed, h, sigma).run(&mut src, sink, None, None);
    Ok(())
}

/// [`stream_phi_spectral`] collected into a field.
pub fn sample_phi_spectral(grid: &TorusGrid, seed: u64, m: &MollifierSpec, kspec: &HeatKernelSpec) -> Result<Field> {
    let mut phi = Field::zeros(*grid);
    stream_phi_spectral(grid, seed, m, kspec, &mut |it, v| phi.slice_mut(it).copy_from_slice(v))?;
    Ok(phi)
}

struct LinearContext<'a> {
    sp: &'a Spectral,
    kspec: &'a HeatKernelSpec,
    w: &'a [f64],
    h: usize,
    n: usize,
    nt: usize,
    dt: f64,
    seed: u64,
    lead: i64,
    sigma: f64,
    sym: Vec<f64>,
}

impl<'a> LinearContext<'a> {
    fn new(
        grid: &TorusGrid,
        sp: &'a Spectral,
        mk: &'a MollifierKernel,
        kspec: &'a HeatKernelSpec,
        seed: u64,
        lead: usize,
        sigma: f64,
    ) -> Self {
        let n = grid.n_space();
        LinearContext {
            sp,
            kspec,
            w: &mk.temporal,
            h: mk.half_time,
            n,
            nt: grid.n_time(),
            dt: grid.dt(),
            seed,
            lead: lead as i64,
            sigma,
            sym: mk.spatial_symbol(n),
        }
    }

    fn run(
        &self,
        src: &mut dyn RawSource,
        phi_sink: &mut dyn FnMut(usize, &[f64]),
        mut xi_sink: Option<&mut dyn FnMut(usize, &[f64])>,
        r_sink: Option<&mut dyn FnMut(usize, &[f64])>,
    ) {
        let (sp, w, h, n, nt, dt, lead) = (self.sp, self.w, self.h, self.n, self.nt, self.dt, self.lead);
        let nn = n * n;
        // all spectra below are Hermitian halves
        let hn = sp.half_len();
        let hi = h as i64;
        let sym = &self.sym[..hn];
        let beta = (2.0 * PI).sqrt() * dt;
        let zero = Complex64::new(0.0, 0.0);

        let bound = self.kspec.low_mode_bound();
        let k2s = sp.k2();
        let lows: Vec<usize> = (0..hn).filter(|&k| k2s[k] <= bound).collect();
        let is_low: Vec<bool> = k2s.iter().map(|&q| q <= bound).collect();
        let mc = self.kspec.taps(dt);
        let s_lo = -(mc as i64) - hi;
        let deep = deep_history(self.seed, n, &is_low, s_lo, -lead, n as f64 * self.sigma);
        let recent = src.low_series(&lows, nt as i64 + hi);

        // low modes: finite impulse response over the full history
        let mut g_cache: HashMap<u64, Vec<f64>> = HashMap::new();
        let mut low_phi: Vec<Vec<Complex64>> = Vec::with_capacity(lows.len());
        let mut low_r: Vec<Vec<Complex64>> = Vec::with_capacity(lows.len());
        for (j, &k) in lows.iter().enumerate() {
            let a = decay(k2s[k], dt);
            let rho = sym[k];
            let mut series = deep[&k].clone();
            series.extend_from_slice(&recent[j]);
            let g = g_cache.entry(k2s[k] as u64).or_insert_with(|| {
                let imp: Vec<Complex64> =
                    self.kspec.impulse(dt, a).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
                convolve(&imp, w).into_iter().map(|c| c.re).collect()
            });
            let y = convolve(&series, g);
            let phi_at = |m: i64| y[(m - 1 + hi - s_lo) as usize] * (beta * rho);
            low_phi.push((0..nt).map(|m| phi_at(m as i64)).collect());
            if r_sink.is_some() {
                let xe = convolve(&series, w);
                let xi_at = |m: i64| xe[(m + hi - s_lo) as usize] * rho;
                low_r.push(
                    (0..nt)
                        .map(|m| {
                            let m = m as i64;
                            (phi_at(m + 1) - (phi_at(m) + xi_at(m) * beta) * a) / dt
                        })
                        .collect(),
                );
            }
        }

        // other modes: plain recursion streamed slice by slice, started at
        // m0 = -lead - h from zero with the pre-history folded into `tail`
        let a_vec: Vec<f64> = k2s[..hn].iter().map(|&q| decay(q, dt)).collect();
        let brho: Vec<f64> = sym.iter().map(|r| beta * r).collect();
        let mut tail_white = vec![0.0; nn];
        fill_normals(self.seed, TAIL_STREAM, &mut tail_white);
        let tail_hat = sp.forward(&tail_white);
        let tail: Vec<Complex64> = (0..hn)
            .map(|k| {
                if is_low[k] {
                    return zero;
                }
                let a = a_vec[k];
                let mut d = 0.0;
                for (i, &wi) in w.iter().enumerate() {
                    d += wi * a.powi((2 * h + 1 - i) as i32);
                }
                tail_hat[k] * (brho[k] * d * self.sigma / (1.0 - a * a).sqrt())
            })
            .collect();

        let mut out_phi = PairedInverse::new(nn);
        let mut out_xi = PairedInverse::new(nn);
        let mut state = vec![zero; hn];
        let mut xbuf = vec![zero; hn];
        let mut slice = vec![zero; hn];
        let m0 = -lead - hi;
        let m_tail = -lead + hi;
        for m in m0..nt as i64 {
            if m > m0 {
                src.filtered(m - 1, w, &mut xbuf);
                for (((s, x), a), b) in state.iter_mut().zip(&xbuf).zip(&a_vec).zip(&brho) {
                    *s = (*s + x * b) * a;
                }
                if m >= 1 {
                    if let Some(sink) = xi_sink.as_mut() {
                        for (x, r) in xbuf.iter_mut().zip(sym) {
                            *x *= r;
                        }
                        out_xi.push(sp, &xbuf, (m - 1) as usize, &mut **sink);
                    }
                }
            }
            if m == m_tail {
                for (s, t) in state.iter_mut().zip(&tail) {
                    *s += t;
                }
            }
            if m >= 0 {
                slice.copy_from_slice(&state);
                for (j, &k) in lows.iter().enumerate() {
                    slice[k] = low_phi[j][m as usize];
                }
                out_phi.push(sp, &slice, m as usize, phi_sink);
            }
        }
        out_phi.finish(sp, phi_sink);
        if let Some(sink) = xi_sink.as_mut() {
            src.filtered(nt as i64 - 1, w, &mut xbuf);
            for (x, r) in xbuf.iter_mut().zip(sym) {
                *x *= r;
            }
            out_xi.push(sp, &xbuf, nt - 1, &mut **sink);
            out_xi.finish(sp, &mut **sink);
        }
        if let Some(sink) = r_sink {
            let mut out = PairedInverse::new(nn);
            let mut buf = vec![zero; hn];
            for m in 0..nt {
                for (j, &k) in lows.iter().enumerate() {
                    buf[k] = low_r[j][m];
                }
                out.push(sp, &buf, m, sink);
            }
            out.finish(sp, sink);
        }
    }
}

/// Inverse transforms of Hermitian half spectra, two per complex transform,
/// delivered to a sink in push order.
struct PairedInverse {
    pending: Option<(usize, Vec<Complex64>)>,
    buf: Vec<Complex64>,
    out_a: Vec<f64>,
    out_b: Vec<f64>,
}

impl PairedInverse {
    fn new(nn: usize) -> Self {
        PairedInverse {
            pending: None,
            buf: vec![Complex64::new(0.0, 0.0); nn],
            out_a: vec![0.0; nn],
            out_b: vec![0.0; nn],
        }
    }

    fn push(&mut self, sp: &Spectral, spec: &[Complex64], slice: usize, sink: &mut dyn FnMut(usize, &[f64])) {
        match self.pending.take() {
            None => self.pending = Some((slice, spec.to_vec())),
            Some((s0, first)) => {
                sp.inverse_pair_half(&first, spec, &mut self.buf, &mut self.out_a, &mut self.out_b);
                sink(s0, &self.out_a);
                sink(slice, &self.out_b);
            }
        }
    }

    fn finish(&mut self, sp: &Spectral, sink: &mut dyn FnMut(usize, &[f64])) {
        if let Some((s0, first)) = self.pending.take() {
            sp.inverse_half(&first, &mut self.buf, &mut self.out_a);
            sink(s0, &self.out_a);
        }
    }
}

/// Raw Fourier coefficients of white noise on the low modes for slices
/// `s_lo <= s < s_hi`, with Hermitian pairs; `scale` = `n sigma`.
fn deep_history(
    seed: u64,
    n: usize,
    is_low: &[bool],
    s_lo: i64,
    s_hi: i64,
    scale: f64,
) -> HashMap<usize, Vec<Complex64>> {
    let nn = n * n;
    let conj = |k: usize| {
        let (i, j) = (k / n, k % n);
        ((n - i) % n) * n + (n - j) % n
    };
    let lows: Vec<usize> = (0..nn).filter(|&k| is_low[k]).collect();
    let len = (s_hi - s_lo).max(0) as usize;
    let mut out: HashMap<usize, Vec<Complex64>> =
        lows.iter().map(|&k| (k, vec![Complex64::new(0.0, 0.0); len])).collect();
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for p in 0..len {
        let mut rng = stream(seed, deep_stream(s_lo + p as i64));
        for &k in &lows {
            let kc = conj(k);
            if kc == k {
                out.get_mut(&k).unwrap()[p] = Complex64::new(scale * normal(&mut rng), 0.0);
            } else if k < kc {
                let z = Complex64::new(normal(&mut rng), normal(&mut rng)) * (scale * r2);
                out.get_mut(&k).unwrap()[p] = z;
                // partners outside a half-spectrum request are not stored
                if let Some(v) = out.get_mut(&kc) {
                    v[p] = z.conj();
                }
            }
        }
    }
    out
}

/// Exact lattice covariance of `Phi_eps`, evaluated mode by mode.
pub struct CovarianceEngine {
    n: usize,
    dt: f64,
    symbol: Vec<f64>,
    k2: Vec<f64>,
    auto_w: Vec<f64>,
    h: usize,
    kspec: HeatKernelSpec,
    low_g: HashMap<u64, Vec<f64>>,
}

impl CovarianceEngine {
    pub fn new(m: &MollifierSpec, kspec: &HeatKernelSpec, grid: &TorusGrid) -> Result<Self> {
        let mk = MollifierKernel::tabulate(m, grid)?;
        let n = grid.n_space();
        let h = mk.half_time;
        let w = &mk.temporal;
        // A_d = sum_i w_i w_{i+d}, d in -2h..=2h
        let mut auto_w = vec![0.0; 4 * h + 1];
        for (i, wi) in w.iter().enumerate() {
            for (j, wj) in w.iter().enumerate() {
                auto_w[(j as i64 - i as i64 + 2 * h as i64) as usize] += wi * wj;
            }
        }
        let sp = Spectral::new(n);
        let k2 = sp.k2().to_vec();
        let bound = kspec.low_mode_bound();
        let mut low_g = HashMap::new();
        for &q in &k2 {
            if q <= bound && !low_g.contains_key(&(q as u64)) {
                let imp: Vec<Complex64> = kspec
                    .impulse(grid.dt(), decay(q, grid.dt()))
                    .into_iter()
                    .map(|v| Complex64::new(v, 0.0))
                    .collect();
                let g: Vec<f64> = convolve(&imp, w).into_iter().map(|c| c.re).collect();
                low_g.insert(q as u64, g);
            }
        }
        Ok(CovarianceEngine { n, dt: grid.dt(), symbol: mk.spatial_symbol(n), k2, auto_w, h, kspec: *kspec, low_g })
    }

    /// `sum_s G_s G_{s+lag}` for the temporal filter of modes with `|k|^2 = k2`.
    fn lag_sum(&self, k2: f64, lag: usize) -> f64 {
        if k2 <= self.kspec.low_mode_bound() {
            let g = &self.low_g[&(k2 as u64)];
            if lag >= g.len() {
                return 0.0;
            }
            return g.iter().zip(&g[lag..]).map(|(a, b)| a * b).sum();
        }
        let a = decay(k2, self.dt);
        let la = a.ln();
        let mut acc = 0.0;
        for (idx, ad) in self.auto_w.iter().enumerate() {
            let d = idx as i64 - 2 * self.h as i64;
            acc += ad * ((d + lag as i64).abs() as f64 * la).exp();
        }
        acc * a * a / (1.0 - a * a)
    }

    /// Per-mode variances (`E|c_k|^2`) at time lag `lag` slices.
    pub fn mode_covariances(&self, lag: usize) -> Vec<f64> {
        let mut cache: HashMap<u64, f64> = HashMap::new();
        (0..self.n * self.n)
            .map(|k| {
                let k2 = self.k2[k];
                let s = *cache.entry(k2 as u64).or_insert_with(|| self.lag_sum(k2, lag));
                2.0 * PI * self.dt * self.symbol[k] * self.symbol[k] * s
            })
            .collect()
    }

    /// `Q_eps(t, x)` with `t` snapped to the lattice.
    pub fn q(&self, t: f64, x: [f64; 2]) -> f64 {
        let lag = (t.abs() / self.dt).round() as usize;
        self.q_from(&self.mode_covariances(lag), x)
    }

    pub fn q_from(&self, modes: &[f64], x: [f64; 2]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let p1 = wavenumber(i, n) as f64 * x[0];
            for j in 0..n {
                let v = modes[i * n + j];
                if v == 0.0 {
                    continue;
                }
                acc += v * (2.0 * PI * (p1 + wavenumber(j, n) as f64 * x[1])).cos();
            }
        }
        acc
    }

    pub fn q_zero(&self) -> f64 {
        self.mode_covariances(0).iter().sum()
    }
}

/// `Q_eps(0) = Var Phi_eps(z)` on `grid`, exact.
pub fn covariance_at_zero(m: &MollifierSpec, kspec: &HeatKernelSpec, grid: &TorusGrid) -> Result<f64> {
    Ok(CovarianceEngine::new(m, kspec, grid)?.q_zero())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceProfile {
    pub epsilon: f64,
    /// `(parabolic norm of the probe, Q_eps(probe))`.
    pub samples: Vec<(f64, f64)>,
    pub q_zero: f64,
}

/// `Q_eps` at each probe `z = (t, x)`, read as a displacement from the origin.
pub fn covariance_profile(
    m: &MollifierSpec,
    kspec: &HeatKernelSpec,
    grid: &TorusGrid,
    probes: &[SpaceTimePoint],
) -> Result<CovarianceProfile> {
    let eng = CovarianceEngine::new(m, kspec, grid)?;
    let mut by_lag: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut samples = Vec::with_capacity(probes.len());
    for z in probes {
        let lag = (z.t.abs() / grid.dt()).round() as usize;
        let modes = by_lag.entry(lag).or_insert_with(|| eng.mode_covariances(lag));
        let d = liouville_core::geometry::parabolic_distance(z, &SpaceTimePoint::new(0.0, [0.0, 0.0]));
        if d > 1.0 {
            return Err(Error::Domain(format!("probe at parabolic distance {d} > 1")));
        }
        samples.push((d, eng.q_from(modes, z.x)));
    }
    Ok(CovarianceProfile { epsilon: m.epsilon, samples, q_zero: eng.q_zero() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CRhoEstimate {
    pub c_hat: f64,
    pub c_rho: f64,
    pub epsilons: Vec<f64>,
    pub q_zero: Vec<f64>,
    pub residual: f64,
}

/// Fits `Q_eps(0) - log(1/eps) = C_hat + b eps^2` over `levels` dyadic values
/// `m.epsilon / 2^j` and returns `C_hat` with `C_rho = exp(-gamma^2 C_hat / 2)`.
pub fn estimate_c_rho(
    m: &MollifierSpec,
    kspec: &HeatKernelSpec,
    grid: &TorusGrid,
    gamma: f64,
    levels: usize,
) -> Result<CRhoEstimate> {
    if levels < 3 {
        return Err(Error::Fit(format!("need at least 3 dyadic levels, got {levels}")));
    }
    let epsilons: Vec<f64> = (0..levels).map(|j| m.epsilon / 2f64.powi(j as i32)).collect();
    let q_zero = epsilons
        .iter()
        .map(|&e| covariance_at_zero(&m.with_epsilon(e), kspec, grid))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = epsilons.iter().map(|e| e * e).collect();
    let ys: Vec<f64> = epsilons.iter().zip(&q_zero).map(|(e, q)| q + e.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    if fit.residual > 0.05 {
        return Err(Error::Fit(format!("C_hat fit residual {} above 0.05", fit.residual)));
    }
    let c_hat = fit.intercept;
    Ok(CRhoEstimate { c_hat, c_rho: (-gamma * gamma * c_hat / 2.0).exp(), epsilons, q_zero, residual: fit.residual })
}
