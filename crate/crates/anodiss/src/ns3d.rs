//! The 2½-dimensional Navier–Stokes embedding: for an autonomous
//! divergence-free planar `u` and a passive scalar `θ` solving the
//! advection–diffusion equation with `κ = ν`, the field `v = (u, θ)` with
//! pressure `P = p` and force `F = (f, 0)` solves the forced 3D
//! Navier–Stokes equations for `x₃`-independent data, where
//! `Δp = −div div(u⊗u)` and `f = 𝓛(u·∇u) − νΔu` (`𝓛` the Leray projector).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{GridScalar, GridVector};
use crate::solver::SolveResult;
use crate::spectral::{Spectral, C64};

/// Assembled pressure and force plus residual diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct NsFields {
    pub p: GridScalar,
    pub f: GridVector,
    pub report: NsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NsReport {
    pub nu: f64,
    /// `‖u·∇u + ∇p − νΔu − f‖₂` (the `∂_t u` term vanishes), with `u·∇u`
    /// in advective form and `p` from the divergence form `div div(u⊗u)`.
    pub velocity_residual: f64,
    /// The above divided by `‖u·∇u‖₂ + ‖νΔu‖₂` (0 when both vanish).
    pub velocity_residual_rel: f64,
    /// Residual of the third component, certified by the scalar solver's
    /// relative energy-equality residual.
    pub theta_residual: f64,
    /// `max(velocity_residual_rel, theta_residual)`.
    pub residual: f64,
    /// The scalar solver's energy residual the criterion compares against.
    pub theta_energy_residual: f64,
}

/// Builds `p` and `f` for `u` and evaluates the discrete residual of the
/// planar momentum equations; `theta` is the scalar run with `κ = ν`.
pub fn ns3d_assemble(u: &GridVector, nu: f64, theta: &SolveResult) -> Result<NsFields> {
    ns3d_assemble_from(u, nu, theta.kappa, theta.n, theta.energy_residual)
}

/// [`ns3d_assemble`] from the scalar run's diffusivity, grid size and
/// relative energy residual (as recovered from a `run.csv`).
pub fn ns3d_assemble_from(u: &GridVector, nu: f64, kappa: f64, theta_n: usize, energy_residual: f64) -> Result<NsFields> {
    if (kappa - nu).abs() > 1e-15 * nu.abs().max(1.0) {
        return Err(Error::Config(format!(
            "the scalar run uses κ = {kappa} but the embedding needs κ = ν = {nu}"
        )));
    }
    let n = u.n;
    if theta_n != n {
        return Err(Error::Config(format!("scalar grid {theta_n} differs from velocity grid {n}")));
    }
    let sp = Spectral::new(n)?;
    let u = u.dealiased(&sp)?;
    let a = sp.forward_real(&u.u1);
    let b = sp.forward_real(&u.u2);
    let (ax, ay) = sp.inverse_real_pair(&sp.derivative(&a, 0), &sp.derivative(&a, 1));
    let (bx, by) = sp.inverse_real_pair(&sp.derivative(&b, 0), &sp.derivative(&b, 1));
    let nn = n * n;
    // advective form (u·∇)u
    let adv1: Vec<f64> = (0..nn).map(|k| u.u1[k] * ax[k] + u.u2[k] * ay[k]).collect();
    let adv2: Vec<f64> = (0..nn).map(|k| u.u1[k] * bx[k] + u.u2[k] * by[k]).collect();
    let mut g1 = sp.forward_real(&adv1);
    let mut g2 = sp.forward_real(&adv2);
    sp.dealias(&mut g1);
    sp.dealias(&mut g2);
    // divergence form: products u_i u_j
    let prod = |x: &[f64], y: &[f64]| {
        let v: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let mut h = sp.forward_real(&v);
        sp.dealias(&mut h);
        h
    };
    let m11 = prod(&u.u1, &u.u1);
    let m12 = prod(&u.u1, &u.u2);
    let m22 = prod(&u.u2, &u.u2);
    let mut ph = vec![C64::default(); nn];
    let mut f1 = vec![C64::default(); nn];
    let mut f2 = vec![C64::default(); nn];
    let mut r1 = vec![C64::default(); nn];
    let mut r2 = vec![C64::default(); nn];
    let (mut na, mut nd) = (0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let (dx, dy) = (sp.deriv_factor(i, j, 0), sp.deriv_factor(i, j, 1));
            let k2 = sp.k2(i, j);
            // Δp = −∂_i∂_j(u_i u_j)
            if k2 > 0.0 {
                let dd = dx * dx * m11[k] + 2.0 * dx * dy * m12[k] + dy * dy * m22[k];
                ph[k] = dd / k2;
            }
            // Leray projection of the advective term
            let kx = dx.im;
            let ky = dy.im;
            let kk = kx * kx + ky * ky;
            let (mut l1, mut l2) = (g1[k], g2[k]);
            if kk > 0.0 {
                let s = (g1[k] * kx + g2[k] * ky) / kk;
                l1 -= s * kx;
                l2 -= s * ky;
            }
            let lap1 = -k2 * a[k];
            let lap2 = -k2 * b[k];
            f1[k] = l1 - nu * lap1;
            f2[k] = l2 - nu * lap2;
            r1[k] = g1[k] + dx * ph[k] - nu * lap1 - f1[k];
            r2[k] = g2[k] + dy * ph[k] - nu * lap2 - f2[k];
            na += g1[k].norm_sqr() + g2[k].norm_sqr();
            nd += (nu * lap1).norm_sqr() + (nu * lap2).norm_sqr();
        }
    }
    let norm = |x: f64| (x / ((nn as f64) * (nn as f64))).sqrt();
    let res = norm(r1.iter().chain(&r2).map(|z| z.norm_sqr()).sum());
    let scale = norm(na) + norm(nd);
    let rel = if scale > 0.0 { res / scale } else { res };
    let (f1r, f2r) = sp.inverse_real_pair(&f1, &f2);
    let theta_residual = energy_residual;
    Ok(NsFields {
        p: GridScalar {
            n,
            data: sp.inverse_real(&ph),
        },
        f: GridVector { n, u1: f1r, u2: f2r },
        report: NsReport {
            nu,
            velocity_residual: res,
            velocity_residual_rel: rel,
            theta_residual,
            residual: rel.max(theta_residual),
            theta_energy_residual: energy_residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_adv_diff, SolverConfig};
    use anodiss_core::geom::Vec2;

    const TAU: f64 = std::f64::consts::TAU;

    fn theta_run(u: Option<&GridVector>, n: usize, nu: f64) -> SolveResult {
        let th = GridScalar::sample(n, |p| (TAU * p.x).cos());
        solve_adv_diff(u, &th, nu, 0.1, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn zero_velocity_gives_zero_pressure_and_force() {
        let n = 16;
        let u = GridVector::zeros(n);
        let r = theta_run(None, n, 1e-3);
        let ns = ns3d_assemble(&u, 1e-3, &r).unwrap();
        assert_eq!(ns.p.sup_abs(), 0.0);
        assert_eq!(ns.f.max_speed(), 0.0);
        assert!(ns.report.residual <= r.energy_residual);
    }

    #[test]
    fn single_mode_shear() {
        let n = 32;
        let nu = 1e-3;
        let u = GridVector::sample(n, |p| Vec2::new((TAU * p.y).sin(), 0.0));
        let r = theta_run(Some(&u), n, nu);
        let ns = ns3d_assemble(&u, nu, &r).unwrap();
        assert!(ns.p.sup_abs() < 1e-14);
        // f = −νΔu = ν(2π)² sin 2πy e_1
        for (k, f) in ns.f.u1.iter().enumerate() {
            let y = (k / n) as f64 / n as f64;
            assert!((f - nu * TAU * TAU * (TAU * y).sin()).abs() < 1e-12);
        }
        assert!(ns.report.velocity_residual < 1e-8);
    }

    #[test]
    fn cellular_flow_has_pressure_and_small_residual() {
        // u = ∇⊥(sin 2πx sin 2πy): u·∇u is a pure gradient
        let n = 32;
        let nu = 1e-2;
        let u = GridVector::sample(n, |p| {
            Vec2::new(
                -TAU * (TAU * p.x).sin() * (TAU * p.y).cos(),
                TAU * (TAU * p.x).cos() * (TAU * p.y).sin(),
            )
        });
        let r = theta_run(Some(&u), n, nu);
        let ns = ns3d_assemble(&u, nu, &r).unwrap();
        assert!(ns.p.sup_abs() > 1.0);
        assert!(ns.report.velocity_residual_rel < 1e-12, "{}", ns.report.velocity_residual_rel);
        assert!(ns3d_assemble(&u, 2.0 * nu, &r).is_err());
    }
}
