//! 2D FFT on the `N x N` spatial lattice (row-major, `data[ix * n + iy]`).

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k2: Vec<f64>,
}

/// Signed wavenumber of DFT index `i` (Nyquist maps to `+n/2`).
pub fn wavenumber(i: usize, n: usize) -> i64 {
    let (i, n) = (i as i64, n as i64);
    if i <= n / 2 { i } else { i - n }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        let fwd = p.plan_fft_forward(n);
        let inv = p.plan_fft_inverse(n);
        let mut k2 = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (wavenumber(i, n), wavenumber(j, n));
                k2.push((a * a + b * b) as f64);
            }
        }
        Spectral { n, fwd, inv, k2 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `|k|^2` per spectral index.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [Complex64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = Complex64::new(v, 0.0);
        }
        self.transform(out, true);
    }

    /// Inverse transform including the `1/n^2`; keeps the real part.
    pub fn inverse_into(&self, spec: &mut [Complex64], out: &mut [f64]) {
        self.transform(spec, false);
        let s = 1.0 / (self.n * self.n) as f64;
        for (o, c) in out.iter_mut().zip(spec.iter()) {
            *o = c.re * s;
        }
    }

    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let mut out = vec![0.0; spec.len()];
        self.inverse_into(&mut spec, &mut out);
        out
    }

    /// Spectra of two real slices from one complex transform.
    pub fn forward_pair(&self, x: &[f64], y: &[f64], out_x: &mut [Complex64], out_y: &mut [Complex64]) {
        let n = self.n;
        for ((o, &a), &b) in out_x.iter_mut().zip(x).zip(y) {
            *o = Complex64::new(a, b);
        }
        self.transform(out_x, true);
        for i in 0..n {
            let ic = (n - i) % n;
            for j in 0..n {
                let jc = (n - j) % n;
                let z = out_x[i * n + j];
                let zc = out_x[ic * n + jc].conj();
                out_y[i * n + j] = Complex64::new(0.0, -0.5) * (z - zc);
            }
        }
        for i in 0..n {
            let ic = (n - i) % n;
            for j in 0..n {
                let jc = (n - j) % n;
                let k = i * n + j;
                let kc = ic * n + jc;
                if k <= kc {
                    let z = out_x[k];
                    let zc = out_x[kc];
                    out_x[k] = (z + zc.conj()) * 0.5;
                    out_x[kc] = out_x[k].conj();
                }
            }
        }
    }

    /// Inverses of two Hermitian spectra from one complex transform; `buf` is scratch.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64], buf: &mut [Complex64], out_a: &mut [f64], out_b: &mut [f64]) {
        for ((o, x), y) in buf.iter_mut().zip(a).zip(b) {
            *o = x + Complex64::new(-y.im, y.re);
        }
        self.transform(buf, false);
        let s = 1.0 / (self.n * self.n) as f64;
        for ((c, oa), ob) in buf.iter().zip(out_a.iter_mut()).zip(out_b.iter_mut()) {
            *oa = c.re * s;
            *ob = c.im * s;
        }
    }

    /// Length of a half spectrum: rows `0..=n/2` of the full layout.
    pub fn half_len(&self) -> usize {
        (self.n / 2 + 1) * self.n
    }

    /// Half spectra (see [`Spectral::half_len`]) of two real slices; `buf` is scratch.
    pub fn forward_pair_half(&self, x: &[f64], y: &[f64], buf: &mut [Complex64], out_x: &mut [Complex64], out_y: &mut [Complex64]) {
        let n = self.n;
        for ((o, &a), &b) in buf.iter_mut().zip(x).zip(y) {
            *o = Complex64::new(a, b);
        }
        self.transform(buf, true);
        for i in 0..=n / 2 {
            let ic = (n - i) % n;
            for j in 0..n {
                let z = buf[i * n + j];
                let zc = buf[ic * n + (n - j) % n].conj();
                out_x[i * n + j] = (z + zc) * 0.5;
                out_y[i * n + j] = Complex64::new(0.0, -0.5) * (z - zc);
            }
        }
    }

    /// Real slice from a Hermitian half spectrum; `buf` is scratch.
    pub fn inverse_half(&self, half: &[Complex64], buf: &mut [Complex64], out: &mut [f64]) {
        let n = self.n;
        let h = self.half_len();
        buf[..h].copy_from_slice(&half[..h]);
        for i in n / 2 + 1..n {
            let ic = n - i;
            for j in 0..n {
                buf[i * n + j] = half[ic * n + (n - j) % n].conj();
            }
        }
        self.inverse_into(buf, out);
    }

    /// [`Spectral::inverse_pair`] on half spectra.
    pub fn inverse_pair_half(&self, a: &[Complex64], b: &[Complex64], buf: &mut [Complex64], out_a: &mut [f64], out_b: &mut [f64]) {
        let n = self.n;
        let i_unit = Complex64::new(0.0, 1.0);
        for ((o, x), y) in buf.iter_mut().zip(a).zip(b) {
            *o = x + i_unit * y;
        }
        for i in n / 2 + 1..n {
            let ic = n - i;
            for j in 0..n {
                let kc = ic * n + (n - j) % n;
                buf[i * n + j] = a[kc].conj() + i_unit * b[kc].conj();
            }
        }
        self.transform(buf, false);
        let s = 1.0 / (n * n) as f64;
        for ((c, oa), ob) in buf.iter().zip(out_a.iter_mut()).zip(out_b.iter_mut()) {
            *oa = c.re * s;
            *ob = c.im * s;
        }
    }

    /// Multiplies mode `k` of a real slice by `symbol(k)` (a real, even symbol).
    pub fn apply_symbol(&self, x: &[f64], symbol: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut s = self.forward(x);
        for (i, c) in s.iter_mut().enumerate() {
            *c *= symbol(i);
        }
        self.inverse(s)
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n * n);
        let plan = if forward { &self.fwd } else { &self.inv };
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            let need = plan.get_inplace_scratch_len();
            if s.len() < need {
                s.resize(need, Complex64::new(0.0, 0.0));
            }
            plan.process_with_scratch(buf, &mut s[..need]);
            transpose(buf, n);
            plan.process_with_scratch(buf, &mut s[..need]);
            transpose(buf, n);
        });
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

/// In-place square transpose, tiled for cache reuse.
fn transpose(buf: &mut [Complex64], n: usize) {
    const T: usize = 16;
    for bi in (0..n).step_by(T) {
        for bj in (bi..n).step_by(T) {
            for i in bi..(bi + T).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + T).min(n) {
                    buf.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_and_single_mode() {
        let n = 16;
        let s = Spectral::new(n);
        let x: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let y = s.inverse(s.forward(&x));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
        // cos(2 pi (2 x1 + 3 x2)) sits at +-(2, 3) with weight n^2 / 2
        let c: Vec<f64> = (0..n * n)
            .map(|i| (2.0 * PI * (2.0 * (i / n) as f64 + 3.0 * (i % n) as f64) / n as f64).cos())
            .collect();
        let f = s.forward(&c);
        assert!((f[2 * n + 3].re - (n * n) as f64 / 2.0).abs() < 1e-9);
        assert!((f[(n - 2) * n + n - 3].re - (n * n) as f64 / 2.0).abs() < 1e-9);
        assert_eq!(s.k2()[2 * n + 3], 13.0);
        assert_eq!(s.k2()[(n - 2) * n + n - 3], 13.0);
    }

    #[test]
    fn paired_transforms_match_single() {
        let n = 8;
        let s = Spectral::new(n);
        let x: Vec<f64> = (0..n * n).map(|i| ((i * 31) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..n * n).map(|i| ((i * 17) % 7) as f64 * 0.5).collect();
        let mut fx = vec![Complex64::new(0.0, 0.0); n * n];
        let mut fy = fx.clone();
        s.forward_pair(&x, &y, &mut fx, &mut fy);
        for (a, b) in fx.iter().zip(s.forward(&x)) {
            assert!((a - b).norm() < 1e-11);
        }
        for (a, b) in fy.iter().zip(s.forward(&y)) {
            assert!((a - b).norm() < 1e-11);
        }
        let mut buf = fx.clone();
        let h = s.half_len();
        let (mut hx, mut hy) = (vec![Complex64::new(0.0, 0.0); h], vec![Complex64::new(0.0, 0.0); h]);
        s.forward_pair_half(&x, &y, &mut buf, &mut hx, &mut hy);
        assert!(hx.iter().zip(&fx).chain(hy.iter().zip(&fy)).all(|(a, b)| (a - b).norm() < 1e-11));
        let mut back = vec![0.0; n * n];
        s.inverse_half(&hy, &mut buf, &mut back);
        assert!(back.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
        let mut back_x = vec![0.0; n * n];
        s.inverse_pair_half(&hx, &hy, &mut buf, &mut back_x, &mut back);
        assert!(back_x.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(back.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
        let mut ox = vec![0.0; n * n];
        let mut oy = vec![0.0; n * n];
        s.inverse_pair(&fx, &fy, &mut buf, &mut ox, &mut oy);
        assert!(ox.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(oy.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
