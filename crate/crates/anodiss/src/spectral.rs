//! Periodic `n × n` Fourier transforms on the unit torus.
//!
//! Grid values are stored row-major with index `j·n + i` for the point
//! `(x, y) = (i/n, j/n)`; spectral arrays use the same layout with the
//! signed wavenumbers `k_x = wavenumber(i)`, `k_y = wavenumber(j)`.  The
//! forward transform is unnormalised; the inverse divides by `n²`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const TAU: f64 = std::f64::consts::TAU;

/// FFT plans and wavenumber tables for one grid size.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    /// Plans for an `n × n` grid (`n` even, `n ≥ 4`).
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!("grid resolution {n} must be even and >= 4")));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k = (0..n).map(|i| wavenumber(i, n)).collect();
        Ok(Spectral { n, fwd, inv, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Signed wavenumber of index `i` (the Nyquist index maps to `−n/2`).
    pub fn k(&self, i: usize) -> f64 {
        self.k[i]
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "spectral buffer has wrong size");
        let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    /// In-place unnormalised forward transform.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.fwd);
    }

    /// In-place inverse transform including the `1/n²` factor.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<C64> {
        let mut d: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward(&mut d);
        d
    }

    /// Inverse of a Hermitian spectrum; the (round-off) imaginary part is
    /// dropped.
    pub fn inverse_real(&self, xh: &[C64]) -> Vec<f64> {
        let mut d = xh.to_vec();
        self.inverse(&mut d);
        d.into_iter().map(|z| z.re).collect()
    }

    /// Two real fields from two Hermitian spectra with a single complex
    /// transform (`a + i·b`).
    pub fn inverse_real_pair(&self, ah: &[C64], bh: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let i = C64::new(0.0, 1.0);
        let mut d: Vec<C64> = ah.iter().zip(bh).map(|(&a, &b)| a + i * b).collect();
        self.inverse(&mut d);
        d.into_iter().map(|z| (z.re, z.im)).unzip()
    }

    /// Spectral `∂_x` (`axis = 0`) or `∂_y` (`axis = 1`) multiplier `2πi k`,
    /// with the Nyquist mode zeroed so that derivatives of real fields stay
    /// real.
    pub fn deriv_factor(&self, i: usize, j: usize, axis: usize) -> C64 {
        let n = self.n;
        let idx = if axis == 0 { i } else { j };
        if idx == n / 2 {
            return C64::default();
        }
        C64::new(0.0, TAU * self.k[idx])
    }

    /// Spectrum of a derivative.
    pub fn derivative(&self, xh: &[C64], axis: usize) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![C64::default(); n * n];
        for j in 0..n {
            for i in 0..n {
                out[j * n + i] = xh[j * n + i] * self.deriv_factor(i, j, axis);
            }
        }
        out
    }

    /// `|2πk|²` at index `(i, j)`.
    pub fn k2(&self, i: usize, j: usize) -> f64 {
        TAU * TAU * (self.k[i] * self.k[i] + self.k[j] * self.k[j])
    }

    /// Orszag 2/3 rule: modes with `3|k_x| ≥ n` or `3|k_y| ≥ n` are removed.
    pub fn keep(&self, i: usize, j: usize) -> bool {
        let n = self.n as f64;
        3.0 * self.k[i].abs() < n && 3.0 * self.k[j].abs() < n
    }

    pub fn dealias(&self, xh: &mut [C64]) {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                if !self.keep(i, j) {
                    xh[j * n + i] = C64::default();
                }
            }
        }
    }

    /// Grid mean `Σx/n²` from a spectrum.
    pub fn mean_of(&self, xh: &[C64]) -> f64 {
        xh[0].re / (self.n * self.n) as f64
    }

    /// `∫|x|²` over the torus by Parseval.
    pub fn l2_sq(&self, xh: &[C64]) -> f64 {
        let s: f64 = xh.iter().map(|z| z.norm_sqr()).sum();
        s / ((self.n * self.n) as f64).powi(2)
    }

    /// `∫|∇x|²` by Parseval.
    pub fn grad_sq(&self, xh: &[C64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += self.k2(i, j) * xh[j * n + i].norm_sqr();
            }
        }
        s / ((n * n) as f64).powi(2)
    }

    /// Exact trigonometric interpolation of the grid function with spectrum
    /// `xh` at an arbitrary point (Nyquist modes dropped).
    pub fn eval_at(&self, xh: &[C64], x: f64, y: f64) -> f64 {
        let n = self.n;
        let ex: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, TAU * self.k[i] * x)).collect();
        let mut s = C64::default();
        for j in 0..n {
            if j == n / 2 {
                continue;
            }
            let ey = C64::from_polar(1.0, TAU * self.k[j] * y);
            let mut row = C64::default();
            for i in 0..n {
                if i == n / 2 {
                    continue;
                }
                row += xh[j * n + i] * ex[i];
            }
            s += row * ey;
        }
        s.re / (n * n) as f64
    }
}

/// Signed wavenumber of FFT index `i` on an `n`-point grid.
pub fn wavenumber(i: usize, n: usize) -> f64 {
    if i < n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn transpose(d: &mut [C64], n: usize) {
    const B: usize = 32;
    for jb in (0..n).step_by(B) {
        for ib in (jb..n).step_by(B) {
            for j in jb..(jb + B).min(n) {
                let i0 = if ib == jb { j + 1 } else { ib };
                for i in i0..(ib + B).min(n) {
                    d.swap(j * n + i, i * n + j);
                }
            }
        }
    }
}
