//! PDE-side identities and experiments built on the solver: the dissipation
//! ladder, the bound on `∂_t θ`, the stream-function initial datum and
//! stability under velocity perturbations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{GridScalar, GridVector};
use crate::solver::{solve_adv_diff, solve_observed, SolverConfig};
use crate::spectral::Spectral;

/// `‖θ‖_{C¹} = ‖θ‖_∞ + ‖∇θ‖_∞` and `‖θ‖_{C²} = ‖θ‖_{C¹} + ‖∇²θ‖_∞`
/// (operator norm of the Hessian), computed spectrally on the grid.
pub fn c1_c2_norms(theta: &GridScalar) -> Result<(f64, f64)> {
    let sp = Spectral::new(theta.n)?;
    let th = sp.forward_real(&theta.data);
    let dx = sp.derivative(&th, 0);
    let dy = sp.derivative(&th, 1);
    let (gx, gy) = sp.inverse_real_pair(&dx, &dy);
    let (hxx, hxy) = sp.inverse_real_pair(&sp.derivative(&dx, 0), &sp.derivative(&dx, 1));
    let hyy = sp.inverse_real(&sp.derivative(&dy, 1));
    let sup = theta.sup_abs();
    let mut g = 0.0f64;
    let mut h = 0.0f64;
    for k in 0..gx.len() {
        g = g.max((gx[k] * gx[k] + gy[k] * gy[k]).sqrt());
        // largest |eigenvalue| of the symmetric Hessian
        let (a, b, c) = (hxx[k], hxy[k], hyy[k]);
        let m = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        h = h.max((m + r).abs().max((m - r).abs()));
    }
    Ok((sup + g, sup + g + h))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeDerivativeReport {
    /// `max_k ‖θ(t_{k+1}) − θ(t_k)‖_∞ / Δt` over all solver steps.
    pub max_rate: f64,
    /// `‖u‖_{L²}‖θ_in‖_{C¹} + ‖θ_in‖_{C²}`.
    pub bound: f64,
    pub margin: f64,
    pub ok: bool,
}

/// Compares the finite-difference time derivative of the solution with the
/// a-priori bound `‖u‖_{L²}‖θ_in‖_{C¹} + ‖θ_in‖_{C²}` (valid for `κ ≤ 1`).
pub fn time_derivative_bound_check(
    u: Option<&GridVector>,
    theta0: &GridScalar,
    kappa: f64,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<TimeDerivativeReport> {
    let cfg = SolverConfig {
        max_rows: usize::MAX,
        ..cfg.clone()
    };
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut max_rate = 0.0f64;
    solve_observed(u, theta0, kappa, t_end, &cfg, &mut |_, t, th| {
        if let Some((tp, p)) = &prev {
            let d = th.iter().zip(p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if t > *tp {
                max_rate = max_rate.max(d / (t - tp));
            }
        }
        prev = Some((t, th.to_vec()));
    })?;
    let (c1, c2) = c1_c2_norms(theta0)?;
    let ul2 = u.map(|u| u.l2_sq().sqrt()).unwrap_or(0.0);
    let bound = ul2 * c1 + c2;
    Ok(TimeDerivativeReport {
        max_rate,
        bound,
        margin: bound - max_rate,
        ok: max_rate <= bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamIcRow {
    pub kappa: f64,
    pub e0: f64,
    pub diss: f64,
    pub ratio: f64,
    /// `κ·T·‖∇H‖₂²`.
    pub bound: f64,
    pub energy_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamIcReport {
    pub rows: Vec<StreamIcRow>,
    /// `D(T)/e(0)` strictly decreases along the given (decreasing) κ list.
    pub monotone: bool,
    /// `D(T) ≤ slack·κT‖∇H‖²` for every κ.
    pub within_bound: bool,
    pub slack: f64,
}

/// Runs the solver from `θ_0 = H` for each diffusivity; since `u·∇H = 0`
/// the dissipation is controlled by `κT‖∇H‖²`.
pub fn stream_ic_experiment(
    u: &GridVector,
    h: &GridScalar,
    kappas: &[f64],
    t_end: f64,
    slack: f64,
    cfg: &SolverConfig,
) -> Result<StreamIcReport> {
    let sp = Spectral::new(h.n)?;
    let grad_h = sp.grad_sq(&sp.forward_real(&h.data));
    let mut rows = Vec::new();
    for &kappa in kappas {
        let r = solve_adv_diff(Some(u), h, kappa, t_end, cfg)?;
        let e0 = r.energy[0];
        let diss = r.final_cum_diss();
        rows.push(StreamIcRow {
            kappa,
            e0,
            diss,
            ratio: diss / e0,
            bound: kappa * t_end * grad_h,
            energy_residual: r.energy_residual,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].ratio < w[0].ratio);
    let within_bound = rows.iter().all(|r| r.diss <= slack * r.bound);
    Ok(StreamIcReport {
        rows,
        monotone,
        within_bound,
        slack,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `∫|θ₁ − θ₂|²(T)`.
    pub lhs: f64,
    /// `(‖θ_0‖²_∞/κ)·∫_0^T∫|u₁ − u₂|²`.
    pub rhs: f64,
    /// `lhs ≤ 2·rhs` (factor 2 is the discretisation allowance).
    pub ok: bool,
}

/// Solves with two velocity fields from the same datum and compares the
/// final difference with the stability bound.
pub fn velocity_stability_check(
    u1: &GridVector,
    u2: &GridVector,
    theta0: &GridScalar,
    kappa: f64,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<StabilityReport> {
    if kappa <= 0.0 {
        return Err(Error::Config("the stability bound needs κ > 0".into()));
    }
    let r1 = solve_adv_diff(Some(u1), theta0, kappa, t_end, cfg)?;
    let r2 = solve_adv_diff(Some(u2), theta0, kappa, t_end, cfg)?;
    let n2 = (theta0.n * theta0.n) as f64;
    let lhs = r1
        .theta_final
        .data
        .iter()
        .zip(&r2.theta_final.data)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n2;
    let sup = theta0.sup_abs();
    let rhs = sup * sup / kappa * t_end * u1.diff_l2_sq(u2)?;
    Ok(StabilityReport {
        lhs,
        rhs,
        ok: lhs <= 2.0 * rhs,
    })
}

/// One rung of the dissipation ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderRow {
    pub label: String,
    pub q: usize,
    pub kappa: f64,
    pub e0: f64,
    pub diss: f64,
    pub ratio: f64,
    pub energy_residual: f64,
}

/// `D(T) = κ∫_0^T∫|∇θ|²` and `D(T)/e(0)` for each `(label, q, κ, u)` rung.
pub fn dissipation_ladder(
    rungs: &[(String, usize, f64, Option<&GridVector>)],
    theta0: &GridScalar,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<Vec<LadderRow>> {
    let mut out = Vec::new();
    for (label, q, kappa, u) in rungs {
        let r = solve_adv_diff(*u, theta0, *kappa, t_end, cfg)?;
        out.push(LadderRow {
            label: label.clone(),
            q: *q,
            kappa: *kappa,
            e0: r.energy[0],
            diss: r.final_cum_diss(),
            ratio: r.final_cum_diss() / r.energy[0],
            energy_residual: r.energy_residual,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anodiss_core::geom::Vec2;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn norms_of_a_cosine() {
        let th = GridScalar::sample(32, |p| (TAU * p.x).cos());
        let (c1, c2) = c1_c2_norms(&th).unwrap();
        assert!((c1 - (1.0 + TAU)).abs() < 1e-10);
        assert!((c2 - (1.0 + TAU + TAU * TAU)).abs() < 1e-9);
    }

    #[test]
    fn heat_time_derivative_is_below_the_bound() {
        let th = GridScalar::sample(32, |p| (TAU * p.x).cos());
        let kappa = 0.1;
        let r = time_derivative_bound_check(None, &th, kappa, 0.2, &SolverConfig::default()).unwrap();
        // ‖∂_tθ‖_∞ ≤ 4π²κ
        assert!(r.max_rate <= TAU * TAU * kappa * (1.0 + 1e-9));
        assert!(r.max_rate > 0.9 * TAU * TAU * kappa * (-TAU * TAU * kappa * 0.2).exp());
        assert!(r.ok);
    }

    #[test]
    fn travelling_wave_time_derivative() {
        let n = 32;
        let th = GridScalar::sample(n, |p| (TAU * p.x).cos());
        let u = GridVector::sample(n, |_| Vec2::new(1.0, 0.0));
        let kappa = 1e-2;
        let r = time_derivative_bound_check(Some(&u), &th, kappa, 0.5, &SolverConfig::default()).unwrap();
        assert!(r.max_rate <= TAU + TAU * TAU * kappa);
        assert!(r.ok && r.margin > 0.0);
    }

    #[test]
    fn stream_datum_of_a_shear_decays_as_heat() {
        let n = 32;
        // u = ∇⊥H with H = cos 2πy: u = (2π sin 2πy, 0)
        let u = GridVector::sample(n, |p| Vec2::new(TAU * (TAU * p.y).sin(), 0.0));
        let h = GridScalar::sample(n, |p| (TAU * p.y).cos());
        let kappas = [1e-1, 1e-2, 1e-3];
        let t = 1.0;
        let r = stream_ic_experiment(&u, &h, &kappas, t, 1.1, &SolverConfig::default()).unwrap();
        for row in &r.rows {
            // e(t) = e^{−8π²κt}/2, so D(T) = (1 − e^{−8π²κT})/4
            let exact = (1.0 - (-2.0 * TAU * TAU * row.kappa * t).exp()) / 4.0;
            assert!((row.diss - exact).abs() < 1e-9 * exact, "{} vs {exact}", row.diss);
        }
        assert!(r.monotone && r.within_bound);
        // zero velocity: trivially within the bound
        let z = GridVector::zeros(n);
        assert!(stream_ic_experiment(&z, &h, &[1e-2], t, 1.0, &SolverConfig::default()).unwrap().within_bound);
    }

    #[test]
    fn stability_identical_and_shifted_fields() {
        let n = 32;
        let th = GridScalar::sample(n, |p| (TAU * p.x).sin() * (TAU * p.y).cos());
        let u = GridVector::sample(n, |p| Vec2::new((TAU * p.y).sin(), 0.0));
        let r = velocity_stability_check(&u, &u, &th, 1e-2, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.lhs, 0.0);
        let dv = 1e-3;
        let w = GridVector::sample(n, |p| Vec2::new((TAU * p.y).sin() + dv, 0.0));
        let r = velocity_stability_check(&u, &w, &th, 1e-2, 1.0, &SolverConfig::default()).unwrap();
        assert!(r.lhs > 0.0 && r.ok);
        assert!((r.rhs - 1.0 / 1e-2 * dv * dv).abs() < 1e-12);
    }

    #[test]
    fn zero_velocity_ladder_is_linear_in_kappa() {
        let n = 16;
        let th = GridScalar::sample(n, |p| (TAU * p.x).cos());
        let rungs: Vec<(String, usize, f64, Option<&GridVector>)> =
            [1e-4, 5e-5].iter().map(|&k| ("heat".to_string(), 0, k, None)).collect();
        let rows = dissipation_ladder(&rungs, &th, 1.0, &SolverConfig::default()).unwrap();
        let r = rows[0].ratio / rows[1].ratio;
        assert!((r - 2.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn chessboard_shear_ladder_decays() {
        // alternating shears in x and y, no multiscale structure
        let n = 32;
        let u = GridVector::sample(n, |p| Vec2::new((TAU * p.y).sin(), (TAU * p.x).sin()));
        let th = GridScalar::sample(n, |p| (TAU * p.x).cos());
        let rungs: Vec<(String, usize, f64, Option<&GridVector>)> =
            [1e-1, 1e-2, 1e-3].iter().map(|&k| ("chessboard".to_string(), 0, k, Some(&u))).collect();
        let rows = dissipation_ladder(&rungs, &th, 1.0, &SolverConfig::default()).unwrap();
        assert!(rows[0].ratio > rows[2].ratio);
    }
}
