//! Ensembles of the backward stochastic flow and the statistics built on
//! them: Feynman–Kac estimates, the fluctuation–dissipation check, endpoint
//! variance on the dissipative sets, two-cluster and stopping-time
//! diagnostics.
//!
//! For an autonomous divergence-free `u`, the backward flow `X_{T,0}(x)` has
//! the law of `Y(T)` for `dY = −u(Y) ds + √(2κ) dW`, `Y(0) = x`; that forward
//! SDE is what is simulated, on the universal cover `ℝ²` with the 1-periodic
//! field.  Trajectory `i` of an ensemble (start-major numbering) draws from
//! ChaCha8 stream `i` of the ensemble seed, and every reduction runs in index
//! order, so results do not depend on the thread count.

use anodiss_core::bq::AnalyticField;
use anodiss_core::geom::{RectFrame, Vec2};
use anodiss_core::sde::{em_endpoint, em_path, em_until, normal_pair, trajectory_rng};
use anodiss_core::tree::{in_any, PipeTree};
use rand_core_compat::next_unit;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::GridVector;
use crate::initial::Theta0;
use crate::solver::{solve_adv_diff, SolverConfig};

/// Uniform deviates from the per-trajectory generator without adding a
/// direct `rand` dependency: the 53 high bits of a standard normal's CDF
/// are not needed, so a normal pair is mapped through `Φ`.
mod rand_core_compat {
    use anodiss_core::sde::normal_pair;
    use rand_chacha::ChaCha8Rng;

    pub fn next_unit(rng: &mut ChaCha8Rng) -> f64 {
        let z = normal_pair(rng).x;
        0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
    }

    /// Abramowitz–Stegun 7.1.26 (|error| < 1.5e-7), adequate for placing
    /// sample points.
    fn erf(x: f64) -> f64 {
        let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
        let y = 1.0
            - (((((1.061_405_429 * t - 1.453_152_027) * t) + 1.421_413_741) * t - 0.284_496_736) * t
                + 0.254_829_592)
                * t
                * (-x * x).exp();
        if x >= 0.0 {
            y
        } else {
            -y
        }
    }
}

/// Ensemble controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Record every `k`-th state of each trajectory.
    pub path_stride: Option<usize>,
    /// Record `sup_t |W_t − W_T|` per trajectory (for the `Ω̃_T` filter).
    pub track_noise: bool,
}

impl EnsembleSpec {
    pub fn new(n_traj: usize, dt: f64, t_end: f64, seed: u64) -> Self {
        EnsembleSpec {
            n_traj,
            dt,
            t_end,
            seed,
            path_stride: None,
            track_noise: false,
        }
    }
}

/// A drift `u` (the simulated SDE uses `−u`) with the scales used to vet
/// the time step.
pub struct Drift<'a> {
    f: Box<dyn Fn(Vec2) -> Vec2 + Sync + 'a>,
    pub max_speed: f64,
    /// Smallest spatial feature of the field.
    pub min_scale: f64,
}

impl<'a> Drift<'a> {
    pub fn new<F: Fn(Vec2) -> Vec2 + Sync + 'a>(f: F, max_speed: f64, min_scale: f64) -> Self {
        Drift {
            f: Box::new(f),
            max_speed,
            min_scale,
        }
    }

    pub fn zero() -> Self {
        Drift::new(|_| Vec2::ZERO, 0.0, f64::INFINITY)
    }

    pub fn constant(v: Vec2) -> Self {
        Drift::new(move |_| v, v.norm(), f64::INFINITY)
    }

    /// Bilinear interpolation of a grid field whose smallest feature is
    /// `min_scale` (e.g. the mollification radius).
    pub fn grid(u: &'a GridVector, min_scale: f64) -> Self {
        Drift::new(move |p| u.at(p), u.max_speed(), min_scale)
    }

    pub fn analytic(b: &'a AnalyticField) -> Self {
        Drift::new(move |p| b.velocity(p), b.max_speed(), b.min_scale())
    }

    pub fn eval(&self, p: Vec2) -> Vec2 {
        (self.f)(p)
    }
}

/// Per-start endpoint statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StartSummary {
    pub start: Vec2,
    pub mean: Vec2,
    /// `(xx, xy, yy)` sample covariance.
    pub cov: [f64; 3],
    /// `E|X − EX|²` (trace of the covariance).
    pub variance: f64,
    /// Variance of the first component.
    pub var_x1: f64,
}

/// Endpoints (and optionally paths) of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub starts: Vec<Vec2>,
    pub n_traj: usize,
    pub kappa: f64,
    pub spec: EnsembleSpec,
    /// Start-major: trajectory `j` of start `s` is at `s·n_traj + j`.
    pub endpoints: Vec<Vec2>,
    pub paths: Option<Vec<Vec<Vec2>>>,
    pub noise_sup: Option<Vec<f64>>,
    pub summaries: Vec<StartSummary>,
}

impl TrajectoryBatch {
    pub fn endpoints_of(&self, s: usize) -> &[Vec2] {
        &self.endpoints[s * self.n_traj..(s + 1) * self.n_traj]
    }

    /// Global stream index of trajectory `j` of start `s`.
    pub fn seed_index(&self, s: usize, j: usize) -> u64 {
        (s * self.n_traj + j) as u64
    }
}

fn summarize(start: Vec2, ends: &[Vec2]) -> StartSummary {
    let n = ends.len() as f64;
    let mut m = Vec2::ZERO;
    for e in ends {
        m = m + *e;
    }
    m = (1.0 / n) * m;
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for e in ends {
        let d = *e - m;
        xx += d.x * d.x;
        xy += d.x * d.y;
        yy += d.y * d.y;
    }
    let denom = (n - 1.0).max(1.0);
    let cov = [xx / denom, xy / denom, yy / denom];
    StartSummary {
        start,
        mean: m,
        cov,
        variance: cov[0] + cov[2],
        var_x1: cov[0],
    }
}

/// Simulates `n_traj` trajectories from each start.
pub fn backward_flow_ensemble(drift: &Drift, kappa: f64, spec: &EnsembleSpec, starts: &[Vec2]) -> Result<TrajectoryBatch> {
    if spec.n_traj == 0 || !(spec.dt > 0.0) || !(spec.t_end >= 0.0) || !spec.t_end.is_finite() {
        return Err(Error::Config(format!(
            "ensemble needs n_traj >= 1, dt > 0, finite T >= 0 (got {}, {}, {})",
            spec.n_traj, spec.dt, spec.t_end
        )));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Config(format!("diffusivity {kappa} must be finite and >= 0")));
    }
    if drift.max_speed * spec.dt > drift.min_scale / 4.0 {
        return Err(Error::Numeric(format!(
            "time step too large: ‖u‖∞·dt = {} exceeds min-scale/4 = {}",
            drift.max_speed * spec.dt,
            drift.min_scale / 4.0
        )));
    }
    let (n_steps, dt) = anodiss_core::sde::step_plan(spec.t_end, spec.dt)?;
    let total = starts.len() * spec.n_traj;
    let u = |p: Vec2| drift.eval(p);
    let sig = (2.0 * kappa * dt).sqrt();
    let run = |idx: usize| -> (Vec2, Option<Vec<Vec2>>, Option<f64>) {
        let start = starts[idx / spec.n_traj];
        let mut rng = trajectory_rng(spec.seed, idx as u64);
        if let Some(stride) = spec.path_stride {
            let path = em_path(&u, start, kappa, n_steps, dt, stride, &mut rng);
            let end = *path.last().unwrap_or(&start);
            (end, Some(path), None)
        } else if spec.track_noise {
            // same update as em_endpoint, keeping the Brownian path
            let mut y = start;
            let mut w = Vec2::ZERO;
            let mut ws = Vec::with_capacity(n_steps + 1);
            ws.push(w);
            for _ in 0..n_steps {
                let xi = if kappa > 0.0 { normal_pair(&mut rng) } else { Vec2::ZERO };
                y = y + (-dt) * u(y) + sig * xi;
                w = w + dt.sqrt() * xi;
                ws.push(w);
            }
            let sup = ws.iter().map(|v| (*v - w).norm()).fold(0.0, f64::max);
            (y, None, Some(sup))
        } else {
            (em_endpoint(&u, start, kappa, n_steps, dt, &mut rng), None, None)
        }
    };
    let out: Vec<(Vec2, Option<Vec<Vec2>>, Option<f64>)> = (0..total).into_par_iter().map(run).collect();
    let mut endpoints = Vec::with_capacity(total);
    let mut paths = spec.path_stride.map(|_| Vec::with_capacity(total));
    let mut noise = if spec.track_noise && spec.path_stride.is_none() {
        Some(Vec::with_capacity(total))
    } else {
        None
    };
    for (e, p, w) in out {
        if !e.is_finite() {
            return Err(Error::Numeric("non-finite trajectory endpoint".into()));
        }
        endpoints.push(e);
        if let (Some(ps), Some(p)) = (paths.as_mut(), p) {
            ps.push(p);
        }
        if let (Some(ns), Some(w)) = (noise.as_mut(), w) {
            ns.push(w);
        }
    }
    let summaries = starts
        .iter()
        .enumerate()
        .map(|(s, &x)| summarize(x, &endpoints[s * spec.n_traj..(s + 1) * spec.n_traj]))
        .collect();
    Ok(TrajectoryBatch {
        starts: starts.to_vec(),
        n_traj: spec.n_traj,
        kappa,
        spec: spec.clone(),
        endpoints,
        paths,
        noise_sup: noise,
        summaries,
    })
}

/// Cell centres of the uniform `m × m` start grid.
pub fn grid_starts(m: usize) -> Vec<Vec2> {
    let mut v = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            v.push(Vec2::new((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64));
        }
    }
    v
}

/// Per-start Feynman–Kac estimate `E[θ_0(X)]` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkEstimate {
    pub start: Vec2,
    pub mean: f64,
    pub se: f64,
}

/// Mean of `θ_0(endpoint)` per start.
pub fn feynman_kac_estimate(batch: &TrajectoryBatch, theta0: &dyn Fn(Vec2) -> f64) -> Vec<FkEstimate> {
    (0..batch.starts.len())
        .map(|s| {
            let vals: Vec<f64> = batch.endpoints_of(s).iter().map(|&e| theta0(e)).collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            FkEstimate {
                start: batch.starts[s],
                mean: m,
                se: (var / n).sqrt(),
            }
        })
        .collect()
}

/// `∫ Var[θ_0(X(x))] dx` averaged over the starts, with its standard error
/// (from the fourth central moments of each start's sample).
pub fn variance_functional(batch: &TrajectoryBatch, theta0: &dyn Fn(Vec2) -> f64) -> (f64, f64) {
    let ns = batch.starts.len() as f64;
    let (mut total, mut se2) = (0.0, 0.0);
    for s in 0..batch.starts.len() {
        let vals: Vec<f64> = batch.endpoints_of(s).iter().map(|&e| theta0(e)).collect();
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let m2 = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let m4 = vals.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
        let s2 = m2 * n / (n - 1.0).max(1.0);
        total += s2;
        se2 += ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0).max(1.0)) / n).max(0.0);
    }
    (total / ns, se2.sqrt() / ns)
}

/// Fluctuation–dissipation comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FldissReport {
    /// `∫ E|θ_0(X) − Eθ_0(X)|² dx` by Monte Carlo.
    pub lhs: f64,
    /// `2 κ ∫_0^T ∫|∇θ|²` from the solver.
    pub rhs: f64,
    pub mc_se: f64,
    /// Absolute energy-equality residual of the solver run.
    pub pde_tol: f64,
    /// `|lhs − rhs| / rhs`.
    pub rel_err: f64,
    /// `|lhs − rhs| ≤ 3 (mc_se + pde_tol)`.
    pub agrees: bool,
    pub kappa: f64,
    pub t_end: f64,
    pub m: usize,
    pub n_traj: usize,
}

/// The one-line JSON record of the `fldiss` command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FldissLine {
    pub lhs: f64,
    pub rhs: f64,
    pub mc_se: f64,
    pub pde_tol: f64,
    pub rel_err: f64,
}

impl FldissReport {
    pub fn line(&self) -> FldissLine {
        FldissLine {
            lhs: self.lhs,
            rhs: self.rhs,
            mc_se: self.mc_se,
            pde_tol: self.pde_tol,
            rel_err: self.rel_err,
        }
    }
}

/// Runs both sides of the fluctuation–dissipation equality: the ensemble
/// from an `m × m` start grid and the solver on `θ_0`'s grid.  `u_grid` is
/// the velocity seen by the solver (`None` for zero).  Returns the report
/// and the batch.
#[allow(clippy::too_many_arguments)]
pub fn fldiss_check(
    drift: &Drift,
    u_grid: Option<&GridVector>,
    theta0: &Theta0,
    kappa: f64,
    spec: &EnsembleSpec,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(FldissReport, TrajectoryBatch)> {
    let pde = solve_adv_diff(u_grid, &theta0.grid, kappa, spec.t_end, cfg)?;
    fldiss_with_solution(drift, theta0, kappa, spec, m, 2.0 * pde.final_cum_diss(), pde.energy_residual_abs)
}

/// Monte-Carlo side of [`fldiss_check`] against a given right-hand side.
pub fn fldiss_with_solution(
    drift: &Drift,
    theta0: &Theta0,
    kappa: f64,
    spec: &EnsembleSpec,
    m: usize,
    rhs: f64,
    pde_tol: f64,
) -> Result<(FldissReport, TrajectoryBatch)> {
    let batch = backward_flow_ensemble(drift, kappa, spec, &grid_starts(m))?;
    let (lhs, mc_se) = variance_functional(&batch, &|p| theta0.eval(p));
    let rel_err = if rhs != 0.0 {
        (lhs - rhs).abs() / rhs.abs()
    } else {
        (lhs - rhs).abs()
    };
    Ok((
        FldissReport {
            lhs,
            rhs,
            mc_se,
            pde_tol,
            rel_err,
            agrees: (lhs - rhs).abs() <= 3.0 * (mc_se + pde_tol),
            kappa,
            t_end: spec.t_end,
            m,
            n_traj: spec.n_traj,
        },
        batch,
    ))
}

/// Start points in the dissipative set `D_q`: one at the centre of each
/// strip (evenly strided if there are more than `cap`), then deterministic
/// uniform fill inside the strips up to `cap`.
pub fn d_set_starts(tree: &PipeTree, field: &AnalyticField, q: usize, cap: usize, seed: u64) -> Result<Vec<Vec2>> {
    if q >= tree.level_start.len() - 1 {
        return Err(Error::Config(format!("tree has no level {q}")));
    }
    let rects = tree.d_set(field, q);
    if rects.is_empty() {
        return Err(Error::Numeric(format!("D_{q} is empty")));
    }
    let centre = |r: &RectFrame, a: f64, b: f64| r.to_global(Vec2::new(a * r.length, (b - 0.5) * r.width)).wrap();
    let mut out = Vec::new();
    let stride = rects.len().div_ceil(cap.max(1));
    for r in rects.iter().step_by(stride.max(1)) {
        out.push(centre(r, 0.5, 0.5));
    }
    let mut rng = trajectory_rng(seed, u64::MAX);
    while out.len() < cap {
        let k = ((next_unit(&mut rng) * rects.len() as f64) as usize).min(rects.len() - 1);
        let (a, b) = (next_unit(&mut rng), next_unit(&mut rng));
        out.push(centre(&rects[k], a, b));
    }
    out.truncate(cap.max(1));
    Ok(out)
}

/// Endpoint variance over starts in `D_q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    pub q: usize,
    pub kappa: f64,
    pub t_end: f64,
    pub n_starts: usize,
    pub min_variance: f64,
    pub mean_variance: f64,
    pub min_var_x1: f64,
    /// Lebesgue measure of `D_q`.
    pub d_measure: f64,
    /// `4κT`, the Brownian value of `E|X − EX|²`.
    pub brownian: f64,
    /// Exploratory flag: `min_variance < ¼·4κT`.
    pub below_quarter_brownian: bool,
}

pub fn endpoint_variance_on_d(
    drift: &Drift,
    tree: &PipeTree,
    field: &AnalyticField,
    q: usize,
    kappa: f64,
    spec: &EnsembleSpec,
    cap: usize,
) -> Result<(VarianceReport, TrajectoryBatch)> {
    let starts = d_set_starts(tree, field, q, cap, spec.seed)?;
    let batch = backward_flow_ensemble(drift, kappa, spec, &starts)?;
    let v: Vec<f64> = batch.summaries.iter().map(|s| s.variance).collect();
    let brownian = 4.0 * kappa * spec.t_end;
    let min_variance = v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        VarianceReport {
            q,
            kappa,
            t_end: spec.t_end,
            n_starts: starts.len(),
            min_variance,
            mean_variance: v.iter().sum::<f64>() / v.len() as f64,
            min_var_x1: batch.summaries.iter().map(|s| s.var_x1).fold(f64::INFINITY, f64::min),
            d_measure: tree.d_measure(field, q),
            brownian,
            below_quarter_brownian: min_variance < 0.25 * brownian,
        },
        batch,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoClusterRow {
    pub c2: f64,
    /// Mean over starts of `P[|X − x| ≤ c2]`.
    pub p_near: f64,
    /// Mean over starts of `P[|X − x| ≥ 2 c2]`.
    pub p_far: f64,
    /// `min over starts of min(P_near, P_far)`.
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoClusterReport {
    pub rows: Vec<TwoClusterRow>,
    pub best_c2: f64,
    pub best_value: f64,
    /// Every per-start `P_near` is 0 or 1 (the zero-noise limit).
    pub deterministic: bool,
    /// Fraction of trajectories with `sup_t |W_t − W_T| ≤ K` (if tracked).
    pub omega_tilde: Option<f64>,
}

/// Near/far probabilities of the endpoints relative to their starts.
pub fn two_cluster_diagnostic(batch: &TrajectoryBatch, c2_grid: &[f64], k_noise: Option<f64>) -> TwoClusterReport {
    let mut rows = Vec::new();
    let mut deterministic = true;
    for &c2 in c2_grid {
        let (mut sn, mut sf, mut worst) = (0.0, 0.0, f64::INFINITY);
        for s in 0..batch.starts.len() {
            let x = batch.starts[s];
            let ends = batch.endpoints_of(s);
            let n = ends.len() as f64;
            let near = ends.iter().filter(|e| (**e - x).norm() <= c2).count() as f64 / n;
            let far = ends.iter().filter(|e| (**e - x).norm() >= 2.0 * c2).count() as f64 / n;
            if near > 0.0 && near < 1.0 {
                deterministic = false;
            }
            sn += near;
            sf += far;
            worst = worst.min(near.min(far));
        }
        let ns = batch.starts.len() as f64;
        rows.push(TwoClusterRow {
            c2,
            p_near: sn / ns,
            p_far: sf / ns,
            worst,
        });
    }
    let (best_c2, best_value) = rows
        .iter()
        .map(|r| (r.c2, r.worst))
        .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let omega_tilde = match (k_noise, &batch.noise_sup) {
        (Some(k), Some(w)) => Some(w.iter().filter(|&&s| s <= k).count() as f64 / w.len() as f64),
        _ => None,
    };
    TwoClusterReport {
        rows,
        best_c2,
        best_value,
        deterministic,
        omega_tilde,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingRow {
    pub label: String,
    pub hit_fraction: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub iqr: f64,
}

/// First hitting times of target sets (rectangles thickened by `pad`) from
/// the given starts; quantiles over all trajectories that hit.
pub fn stopping_time_profile(
    drift: &Drift,
    targets: &[(String, Vec<RectFrame>)],
    pad: f64,
    starts: &[Vec2],
    kappa: f64,
    spec: &EnsembleSpec,
) -> Result<Vec<StoppingRow>> {
    let (n_steps, dt) = anodiss_core::sde::step_plan(spec.t_end, spec.dt)?;
    let u = |p: Vec2| drift.eval(p);
    let mut rows = Vec::new();
    for (label, rects) in targets {
        let thick: Vec<RectFrame> = rects
            .iter()
            .map(|r| r.sub_rect(-pad, r.length + pad, -r.width / 2.0 - pad, r.width / 2.0 + pad))
            .collect();
        let hit = |p: Vec2| in_any(&thick, p);
        let total = starts.len() * spec.n_traj;
        let times: Vec<Option<f64>> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let mut rng = trajectory_rng(spec.seed, idx as u64);
                em_until(&u, starts[idx / spec.n_traj], kappa, n_steps, dt, &hit, &mut rng).1
            })
            .collect();
        let mut t: Vec<f64> = times.iter().flatten().copied().collect();
        t.sort_by(|a, b| a.total_cmp(b));
        let quant = |p: f64| {
            if t.is_empty() {
                f64::NAN
            } else {
                t[((p * (t.len() - 1) as f64).round() as usize).min(t.len() - 1)]
            }
        };
        rows.push(StoppingRow {
            label: label.clone(),
            hit_fraction: t.len() as f64 / total as f64,
            q25: quant(0.25),
            median: quant(0.5),
            q75: quant(0.75),
            iqr: quant(0.75) - quant(0.25),
        });
    }
    Ok(rows)
}
