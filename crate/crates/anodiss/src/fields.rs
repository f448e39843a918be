//! Grid-sampled fields: periodic scalars, velocity fields, the mollified
//! `u_q`, stream-function recovery and Hölder-norm estimates.

use anodiss_core::bq::{build_bq, AnalyticField};
use anodiss_core::curve::VelocityField;
use anodiss_core::geom::{Mat2, RectFrame, Vec2};
use anodiss_core::params::ParamTable;
use anodiss_core::tree::{in_any, PipeTree};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{Spectral, C64};

/// A periodic `n × n` scalar field with spacing `1/n` (row-major, `j·n + i`
/// holds the value at `(i/n, j/n)`).
#[derive(Clone, Debug, PartialEq)]
pub struct GridScalar {
    pub n: usize,
    pub data: Vec<f64>,
}

impl GridScalar {
    pub fn zeros(n: usize) -> Self {
        GridScalar { n, data: vec![0.0; n * n] }
    }

    /// Samples `f` at the grid nodes, rows in parallel.
    pub fn sample<F: Fn(Vec2) -> f64 + Sync>(n: usize, f: F) -> Self {
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
            }
        });
        GridScalar { n, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ f²` over the torus (grid quadrature, exact for band-limited data).
    pub fn l2_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear interpolation at any real point (wrapped).
    pub fn interp(&self, p: Vec2) -> f64 {
        bilinear(self.n, &self.data, p)
    }
}

fn bilinear(n: usize, d: &[f64], p: Vec2) -> f64 {
    let nf = n as f64;
    let x = p.x * nf;
    let y = p.y * nf;
    let fx = x.floor();
    let fy = y.floor();
    let (tx, ty) = (x - fx, y - fy);
    let i0 = (fx as i64).rem_euclid(n as i64) as usize;
    let j0 = (fy as i64).rem_euclid(n as i64) as usize;
    let i1 = if i0 + 1 == n { 0 } else { i0 + 1 };
    let j1 = if j0 + 1 == n { 0 } else { j0 + 1 };
    let a = d[j0 * n + i0] * (1.0 - tx) + d[j0 * n + i1] * tx;
    let b = d[j1 * n + i0] * (1.0 - tx) + d[j1 * n + i1] * tx;
    a * (1.0 - ty) + b * ty
}

/// A periodic grid velocity field.
#[derive(Clone, Debug, PartialEq)]
pub struct GridVector {
    pub n: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl GridVector {
    pub fn zeros(n: usize) -> Self {
        GridVector {
            n,
            u1: vec![0.0; n * n],
            u2: vec![0.0; n * n],
        }
    }

    /// Samples a velocity at the grid nodes, rows in parallel.
    pub fn sample<F: Fn(Vec2) -> Vec2 + Sync>(n: usize, f: F) -> Self {
        let mut u1 = vec![0.0; n * n];
        let mut u2 = vec![0.0; n * n];
        u1.par_chunks_mut(n)
            .zip(u2.par_chunks_mut(n))
            .enumerate()
            .for_each(|(j, (r1, r2))| {
                for i in 0..n {
                    let v = f(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
                    r1[i] = v.x;
                    r2[i] = v.y;
                }
            });
        GridVector { n, u1, u2 }
    }

    /// Bilinear interpolation at any real point (wrapped).
    pub fn at(&self, p: Vec2) -> Vec2 {
        Vec2::new(bilinear(self.n, &self.u1, p), bilinear(self.n, &self.u2, p))
    }

    pub fn max_speed(&self) -> f64 {
        self.u1
            .iter()
            .zip(&self.u2)
            .fold(0.0, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn mean(&self) -> Vec2 {
        let s = (self.n * self.n) as f64;
        Vec2::new(self.u1.iter().sum::<f64>() / s, self.u2.iter().sum::<f64>() / s)
    }

    /// `∫|u|²` over the torus.
    pub fn l2_sq(&self) -> f64 {
        self.u1.iter().zip(&self.u2).map(|(a, b)| a * a + b * b).sum::<f64>() / (self.n * self.n) as f64
    }

    /// `∫|u − w|²` over the torus.
    pub fn diff_l2_sq(&self, w: &GridVector) -> Result<f64> {
        if w.n != self.n {
            return Err(Error::Config(format!("grid sizes differ: {} vs {}", self.n, w.n)));
        }
        let s: f64 = (0..self.u1.len())
            .map(|k| (self.u1[k] - w.u1[k]).powi(2) + (self.u2[k] - w.u2[k]).powi(2))
            .sum();
        Ok(s / (self.n * self.n) as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(&self.u2).all(|v| v.is_finite())
    }

    /// The field with every Fourier mode outside the 2/3 dealiasing band
    /// removed (the form in which the solver sees it).
    pub fn dealiased(&self, sp: &Spectral) -> Result<GridVector> {
        check_n(sp, self.n)?;
        let mut a = sp.forward_real(&self.u1);
        let mut b = sp.forward_real(&self.u2);
        sp.dealias(&mut a);
        sp.dealias(&mut b);
        let (u1, u2) = sp.inverse_real_pair(&a, &b);
        Ok(GridVector { n: self.n, u1, u2 })
    }

    /// `‖div u‖₂ / ‖∇u‖₂` computed spectrally (0 for a constant field).
    pub fn divergence_ratio(&self, sp: &Spectral) -> Result<f64> {
        check_n(sp, self.n)?;
        let a = sp.forward_real(&self.u1);
        let b = sp.forward_real(&self.u2);
        let n = self.n;
        let (mut div, mut grad) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                let d = a[k] * sp.deriv_factor(i, j, 0) + b[k] * sp.deriv_factor(i, j, 1);
                div += d.norm_sqr();
                grad += sp.k2(i, j) * (a[k].norm_sqr() + b[k].norm_sqr());
            }
        }
        Ok(if grad == 0.0 { 0.0 } else { (div / grad).sqrt() })
    }
}

fn check_n(sp: &Spectral, n: usize) -> Result<()> {
    if sp.n() != n {
        return Err(Error::Config(format!("spectral plan for n = {} used on grid n = {n}", sp.n())));
    }
    Ok(())
}

/// A grid velocity together with its spectrally computed gradient, usable
/// wherever a [`VelocityField`] is needed (bilinear interpolation).
#[derive(Clone, Debug, PartialEq)]
pub struct GridFlow {
    pub u: GridVector,
    /// `∂_x u¹, ∂_y u¹, ∂_x u², ∂_y u²` on the grid.
    pub jac: [Vec<f64>; 4],
}

impl GridFlow {
    pub fn new(u: GridVector, sp: &Spectral) -> Result<Self> {
        check_n(sp, u.n)?;
        let a = sp.forward_real(&u.u1);
        let b = sp.forward_real(&u.u2);
        let (ax, ay) = sp.inverse_real_pair(&sp.derivative(&a, 0), &sp.derivative(&a, 1));
        let (bx, by) = sp.inverse_real_pair(&sp.derivative(&b, 0), &sp.derivative(&b, 1));
        Ok(GridFlow { u, jac: [ax, ay, bx, by] })
    }

    pub fn max_grad(&self) -> f64 {
        let n2 = self.u.n * self.u.n;
        (0..n2)
            .map(|k| anodiss_core::geom::op_norm([self.jac[0][k], self.jac[1][k], self.jac[2][k], self.jac[3][k]]))
            .fold(0.0, f64::max)
    }
}

impl VelocityField for GridFlow {
    fn velocity(&self, p: Vec2) -> Vec2 {
        self.u.at(p)
    }
    fn jacobian(&self, p: Vec2) -> Mat2 {
        let n = self.u.n;
        [
            bilinear(n, &self.jac[0], p),
            bilinear(n, &self.jac[1], p),
            bilinear(n, &self.jac[2], p),
            bilinear(n, &self.jac[3], p),
        ]
    }
}

/// Spectrum of the radial mollifier `φ_ℓ ∝ (1 − |x|²/ℓ²)³₊`, sampled on the
/// grid and normalised to unit discrete mass (so means are preserved
/// exactly).  The kernel is even, so the spectrum is real.
pub fn mollifier_spectrum(sp: &Spectral, ell: f64) -> Result<Vec<f64>> {
    let n = sp.n();
    if !(ell > 0.0) || ell >= 0.5 {
        return Err(Error::Config(format!("mollification radius {ell} must lie in (0, 1/2)")));
    }
    let mut k = vec![0.0; n * n];
    let nf = n as f64;
    for j in 0..n {
        for i in 0..n {
            let x = crate::spectral::wavenumber(i, n) / nf;
            let y = crate::spectral::wavenumber(j, n) / nf;
            let r2 = (x * x + y * y) / (ell * ell);
            if r2 < 1.0 {
                k[j * n + i] = (1.0 - r2).powi(3);
            }
        }
    }
    let mass: f64 = k.iter().sum();
    if mass <= 0.0 {
        return Err(Error::Config(format!("mollification radius {ell} is below the grid spacing")));
    }
    for v in k.iter_mut() {
        *v /= mass;
    }
    Ok(sp.forward_real(&k).into_iter().map(|z| z.re).collect())
}

/// Levels whose layers make up `u_q`: `0` and every positive multiple of 4
/// up to `q`.
pub fn contributing_layers(q: usize) -> Vec<usize> {
    std::iter::once(0).chain((4..=q).step_by(4)).collect()
}

/// Smallest resolved scale of `u_q` (`min(ℓ_j, A_j)` over the contributing
/// layers) and the smallest power-of-two resolution `≥ 4/scale`.
pub fn required_resolution(table: &ParamTable, q: usize) -> (f64, usize) {
    let scale = contributing_layers(q)
        .into_iter()
        .map(|j| {
            let lv = table.level(j);
            lv.ell.min(lv.big_a)
        })
        .fold(f64::INFINITY, f64::min);
    let need = (4.0 / scale).ceil();
    let res = if need > (1u64 << 40) as f64 {
        usize::MAX
    } else {
        (need as usize).next_power_of_two()
    };
    (scale, res)
}

/// The mollified field `u_q` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MollifiedField {
    pub q: usize,
    /// `(j, ℓ_j)` of the contributing layers.
    pub layers: Vec<(usize, f64)>,
    /// Smallest resolved scale (see [`required_resolution`]).
    pub min_scale: f64,
    pub flow: GridFlow,
    /// Relative L² size of the gradient part removed by the final Leray
    /// projection (grid sampling of a divergence-free field is divergence
    /// free only up to discretisation).
    pub leray_removed: f64,
}

impl MollifiedField {
    pub fn u(&self) -> &GridVector {
        &self.flow.u
    }
}

/// `u_q = b_0⋆φ_{ℓ_0} + Σ_{j∈4ℕ, 4≤j≤q} (b_j − b_{j−4})⋆φ_{ℓ_j}` with every
/// convolution done spectrally at resolution `res`, followed by a Leray
/// projection.
pub fn build_uq(table: &ParamTable, q: usize, res: usize) -> Result<MollifiedField> {
    let (scale, need) = required_resolution(table, q);
    if res < need {
        return Err(Error::Config(format!(
            "resolution {res} too coarse for u_{q}: smallest scale {scale:.3e} needs at least {need}"
        )));
    }
    let sp = Spectral::new(res)?;
    let n = res;
    let mut acc1 = vec![C64::default(); n * n];
    let mut acc2 = vec![C64::default(); n * n];
    let mut layers = Vec::new();
    for j in contributing_layers(q) {
        let ell = table.level(j).ell;
        let bj = build_bq(table, j)?;
        let mut g = GridVector::sample(n, |p| bj.velocity(p));
        if j >= 4 {
            let bprev = build_bq(table, j - 4)?;
            let gp = GridVector::sample(n, |p| bprev.velocity(p));
            for k in 0..n * n {
                g.u1[k] -= gp.u1[k];
                g.u2[k] -= gp.u2[k];
            }
        }
        let phi = mollifier_spectrum(&sp, ell)?;
        let a = sp.forward_real(&g.u1);
        let b = sp.forward_real(&g.u2);
        for k in 0..n * n {
            acc1[k] += a[k] * phi[k];
            acc2[k] += b[k] * phi[k];
        }
        layers.push((j, ell));
    }
    let leray_removed = leray(&sp, &mut acc1, &mut acc2);
    let (u1, u2) = sp.inverse_real_pair(&acc1, &acc2);
    let u = GridVector { n, u1, u2 };
    if !u.is_finite() {
        return Err(Error::Numeric(format!("u_{q} contains non-finite values")));
    }
    Ok(MollifiedField {
        q,
        layers,
        min_scale: scale,
        flow: GridFlow::new(u, &sp)?,
        leray_removed,
    })
}

/// Removes the gradient part of `(a, b)` in place; returns the relative L²
/// size of what was removed.
pub fn leray(sp: &Spectral, a: &mut [C64], b: &mut [C64]) -> f64 {
    let n = sp.n();
    let (mut removed, mut total) = (0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            total += a[k].norm_sqr() + b[k].norm_sqr();
            let (kx, ky) = (sp.deriv_factor(i, j, 0).im, sp.deriv_factor(i, j, 1).im);
            let kk = kx * kx + ky * ky;
            if kk == 0.0 {
                continue;
            }
            let p = (a[k] * kx + b[k] * ky) / kk;
            removed += (p * kx).norm_sqr() + (p * ky).norm_sqr();
            a[k] -= p * kx;
            b[k] -= p * ky;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (removed / total).sqrt()
    }
}

/// Output of [`stream_function`].
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFunction {
    /// Zero-mean `H` with `u − mean = ∇⊥H = (−∂_y H, ∂_x H)`.
    pub h: GridScalar,
    /// The mean velocity, which has no periodic stream function.
    pub mean: Vec2,
    /// `‖∇⊥H − (u − mean)‖₂ / ‖u − mean‖₂` (0 if `u` is constant).
    pub residual: f64,
    /// `‖div u‖₂ / ‖∇u‖₂` of the input.
    pub divergence_ratio: f64,
}

/// Solves `ΔH = ∂_x u² − ∂_y u¹` spectrally with zero mean.
pub fn stream_function(u: &GridVector, sp: &Spectral) -> Result<StreamFunction> {
    check_n(sp, u.n)?;
    let n = u.n;
    let a = sp.forward_real(&u.u1);
    let b = sp.forward_real(&u.u2);
    let mut hh = vec![C64::default(); n * n];
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let k2 = sp.k2(i, j);
            if k2 == 0.0 {
                continue;
            }
            let w = b[k] * sp.deriv_factor(i, j, 0) - a[k] * sp.deriv_factor(i, j, 1);
            hh[k] = -w / k2;
        }
    }
    let (hx, hy) = sp.inverse_real_pair(&sp.derivative(&hh, 0), &sp.derivative(&hh, 1));
    let mean = u.mean();
    let (mut r, mut s) = (0.0, 0.0);
    for k in 0..n * n {
        let (e1, e2) = (u.u1[k] - mean.x, u.u2[k] - mean.y);
        r += (-hy[k] - e1).powi(2) + (hx[k] - e2).powi(2);
        s += e1 * e1 + e2 * e2;
    }
    Ok(StreamFunction {
        h: GridScalar {
            n,
            data: sp.inverse_real(&hh),
        },
        mean,
        residual: if s == 0.0 { 0.0 } else { (r / s).sqrt() },
        divergence_ratio: u.divergence_ratio(sp)?,
    })
}

/// Hölder estimate: `sup|f|`, the seminorm `max |f(x)−f(y)|/|x−y|^α` over
/// all axis-aligned grid pairs at dyadic lags `h, 2h, …, ¼`, and their sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderEstimate {
    pub sup: f64,
    pub seminorm: f64,
    pub norm: f64,
}

/// Hölder estimate of a vector field given by its components on an `n × n`
/// grid (Euclidean norm of differences).
pub fn holder_norm(n: usize, comps: &[&[f64]], alpha: f64) -> Result<HolderEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("Hölder exponent {alpha} outside (0, 1]")));
    }
    let sup = (0..n * n)
        .map(|k| comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut semi = 0.0f64;
    let mut s = 1;
    while 4 * s <= n {
        let lag = s as f64 / n as f64;
        let scale = lag.powf(alpha);
        let m = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut m = 0.0f64;
                for i in 0..n {
                    let k = j * n + i;
                    let kx = j * n + (i + s) % n;
                    let ky = ((j + s) % n) * n + i;
                    let dx: f64 = comps.iter().map(|c| (c[kx] - c[k]).powi(2)).sum();
                    let dy: f64 = comps.iter().map(|c| (c[ky] - c[k]).powi(2)).sum();
                    m = m.max(dx.max(dy).sqrt());
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        semi = semi.max(m / scale);
        s *= 2;
    }
    Ok(HolderEstimate {
        sup,
        seminorm: semi,
        norm: sup + semi,
    })
}

/// Largest `|u²|` in the frame of `R` (the component transverse to `R`'s
/// axis) over grid nodes inside one of the `within` rectangles (typically
/// the children of `R`) but outside every rectangle of `allowed`.
pub fn transverse_outside(u: &GridVector, r: &RectFrame, within: &[RectFrame], allowed: &[RectFrame]) -> f64 {
    let n = u.n;
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let p = Vec2::new(i as f64 / n as f64, j as f64 / n as f64);
            if !in_any(within, p) || in_any(allowed, p) {
                continue;
            }
            let k = j * n + i;
            let loc = r.vec_to_local(Vec2::new(u.u1[k], u.u2[k]));
            worst = worst.max(loc.y.abs());
        }
    }
    worst
}

/// Samples the analytic field on a grid (no mollification).
pub fn sample_analytic(field: &AnalyticField, n: usize) -> GridVector {
    GridVector::sample(n, |p| field.velocity(p))
}

/// Convenience: the level-`k` dissipative set of a built tree.
pub fn d_rects(tree: &PipeTree, field: &AnalyticField, k: usize) -> Vec<RectFrame> {
    tree.d_set(field, k)
}
