//! Euler–Maruyama kernels for the backward stochastic flow
//! `dY = −u(Y) ds + √(2κ) dW` on the universal cover of the torus.
//!
//! Every trajectory draws from its own ChaCha8 stream (seed shared, stream
//! index = trajectory index), so results are independent of scheduling.

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::geom::Vec2;

/// The generator of trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Number of steps `⌈T/dt_max⌉` and the effective step `T/n`.
pub fn step_plan(t: f64, dt_max: f64) -> Result<(usize, f64)> {
    if !(t >= 0.0 && t.is_finite() && dt_max > 0.0) {
        return Err(CoreError::Domain(alloc::format!(
            "time horizon {t} and step {dt_max} must be finite with T >= 0, dt > 0"
        )));
    }
    if t == 0.0 {
        return Ok((0, 0.0));
    }
    let n = (t / dt_max).ceil().max(1.0) as usize;
    Ok((n, t / n as f64))
}

/// One pair of independent standard normals.
pub fn normal_pair(rng: &mut ChaCha8Rng) -> Vec2 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    Vec2::new(a, b)
}

/// Endpoint after `n` Euler–Maruyama steps of size `dt` (unwrapped).
pub fn em_endpoint<U: Fn(Vec2) -> Vec2>(u: &U, start: Vec2, kappa: f64, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec2 {
    let sig = (2.0 * kappa * dt).sqrt();
    let mut y = start;
    for _ in 0..n {
        let drift = u(y);
        let xi = if kappa > 0.0 { normal_pair(rng) } else { Vec2::ZERO };
        y = y + (-dt) * drift + sig * xi;
    }
    y
}

/// Like [`em_endpoint`] but records every `stride`-th state (including the
/// start and the endpoint).
pub fn em_path<U: Fn(Vec2) -> Vec2>(
    u: &U,
    start: Vec2,
    kappa: f64,
    n: usize,
    dt: f64,
    stride: usize,
    rng: &mut ChaCha8Rng,
) -> alloc::vec::Vec<Vec2> {
    let stride = stride.max(1);
    let sig = (2.0 * kappa * dt).sqrt();
    let mut out = alloc::vec::Vec::with_capacity(n / stride + 2);
    let mut y = start;
    out.push(y);
    for k in 1..=n {
        let drift = u(y);
        let xi = if kappa > 0.0 { normal_pair(rng) } else { Vec2::ZERO };
        y = y + (-dt) * drift + sig * xi;
        if k % stride == 0 || k == n {
            out.push(y);
        }
    }
    out
}

/// Runs until `hit(y)` or `n` steps; returns the state and the hitting time
/// (`None` if not hit).
pub fn em_until<U: Fn(Vec2) -> Vec2, H: Fn(Vec2) -> bool>(
    u: &U,
    start: Vec2,
    kappa: f64,
    n: usize,
    dt: f64,
    hit: &H,
    rng: &mut ChaCha8Rng,
) -> (Vec2, Option<f64>) {
    let sig = (2.0 * kappa * dt).sqrt();
    let mut y = start;
    if hit(y) {
        return (y, Some(0.0));
    }
    for k in 1..=n {
        let drift = u(y);
        let xi = if kappa > 0.0 { normal_pair(rng) } else { Vec2::ZERO };
        y = y + (-dt) * drift + sig * xi;
        if hit(y) {
            return (y, Some(k as f64 * dt));
        }
    }
    (y, None)
}
