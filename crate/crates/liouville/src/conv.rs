//! Linear convolution of complex series with real kernels, direct or by FFT.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Full linear convolution `y_p = sum_r w_r x_{p-r}`, length `len_x + len_w - 1`.
pub fn convolve_direct(x: &[Complex64], w: &[f64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len() + w.len() - 1];
    for (r, &wr) in w.iter().enumerate() {
        if wr == 0.0 {
            continue;
        }
        for (p, &xv) in x.iter().enumerate() {
            y[p + r] += xv * wr;
        }
    }
    y
}

/// FFT convolution for fixed input lengths.
pub struct Convolver {
    len_x: usize,
    len_w: usize,
    nfft: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Convolver {
    pub fn new(len_x: usize, len_w: usize) -> Self {
        let nfft = (len_x + len_w - 1).next_power_of_two();
        let mut p = FftPlanner::new();
        Convolver { len_x, len_w, nfft, fwd: p.plan_fft_forward(nfft), inv: p.plan_fft_inverse(nfft) }
    }

    /// Transformed kernel, reusable across inputs.
    pub fn kernel(&self, w: &[f64]) -> Vec<Complex64> {
        assert_eq!(w.len(), self.len_w);
        let mut b = vec![Complex64::new(0.0, 0.0); self.nfft];
        for (d, &v) in b.iter_mut().zip(w) {
            d.re = v;
        }
        self.fwd.process(&mut b);
        b
    }

    pub fn apply(&self, x: &[Complex64], w_hat: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.len_x);
        let mut b = vec![Complex64::new(0.0, 0.0); self.nfft];
        b[..x.len()].copy_from_slice(x);
        self.fwd.process(&mut b);
        for (v, k) in b.iter_mut().zip(w_hat) {
            *v *= k;
        }
        self.inv.process(&mut b);
        let s = 1.0 / self.nfft as f64;
        b.truncate(self.len_x + self.len_w - 1);
        for v in b.iter_mut() {
            *v *= s;
        }
        b
    }
}

/// Picks direct or FFT convolution by kernel length.
pub fn convolve(x: &[Complex64], w: &[f64]) -> Vec<Complex64> {
    if w.len() <= 48 || x.len() <= 48 {
        convolve_direct(x, w)
    } else {
        let c = Convolver::new(x.len(), w.len());
        let k = c.kernel(w);
        c.apply(x, &k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct() {
        let x: Vec<Complex64> = (0..300).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let w: Vec<f64> = (0..97).map(|i| (-(i as f64 - 48.0).powi(2) / 200.0).exp()).collect();
        let a = convolve_direct(&x, &w);
        let b = convolve(&x, &w);
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).norm() < 1e-10));
    }
}
