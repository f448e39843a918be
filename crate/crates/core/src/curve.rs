//! Integral curves of autonomous velocity fields and the accumulated local
//! gradient `∫ ‖∇u‖_{L∞(B_ε(γ(t)))} dt` along them.

#[allow(unused_imports)]
use num_traits::Float;

use crate::bq::AnalyticField;
use crate::geom::{op_norm, Mat2, Vec2};
use crate::patch::{Patch, Turn};

/// A velocity field with an absolutely continuous gradient.
pub trait VelocityField {
    fn velocity(&self, p: Vec2) -> Vec2;
    /// `[∂_j u_i]` row-major; jump parts across walls are not included.
    fn jacobian(&self, p: Vec2) -> Mat2;
}

impl VelocityField for Turn {
    fn velocity(&self, p: Vec2) -> Vec2 {
        Turn::velocity(self, p)
    }
    fn jacobian(&self, p: Vec2) -> Mat2 {
        Turn::jacobian(self, p)
    }
}

impl VelocityField for Patch {
    fn velocity(&self, p: Vec2) -> Vec2 {
        Patch::velocity(self, p)
    }
    fn jacobian(&self, p: Vec2) -> Mat2 {
        Patch::jacobian(self, p)
    }
}

impl VelocityField for AnalyticField {
    fn velocity(&self, p: Vec2) -> Vec2 {
        AnalyticField::velocity(self, p)
    }
    fn jacobian(&self, p: Vec2) -> Mat2 {
        AnalyticField::jacobian(self, p)
    }
}

/// Radial and angular sample counts for the ball supremum.
const BALL_RADII: usize = 16;
const BALL_ANGLES: usize = 64;

/// `sup_{B_ε(p)} ‖∇u‖` estimated on a polar sample pattern (centre, 16
/// radii × 64 angles, including the boundary circle).
pub fn ball_sup_grad<F: VelocityField + ?Sized>(f: &F, p: Vec2, eps: f64) -> f64 {
    let mut m = op_norm(f.jacobian(p));
    for i in 1..=BALL_RADII {
        let rad = eps * i as f64 / BALL_RADII as f64;
        for k in 0..BALL_ANGLES {
            let th = core::f64::consts::TAU * (k as f64 + 0.5 * (i % 2) as f64) / BALL_ANGLES as f64;
            let q = p + rad * Vec2::new(th.cos(), th.sin());
            m = m.max(op_norm(f.jacobian(q)));
        }
    }
    m
}

/// Outcome of [`curve_gradient_integral`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveIntegral {
    /// `∫_0^t ‖∇u‖_{L∞(B_ε(γ))} ds` up to the time reached.
    pub integral: f64,
    /// Time actually integrated (`t_end` unless the curve left the domain).
    pub t_reached: f64,
    /// The curve left `domain` before `t_end`; the integral is partial.
    pub left_domain: bool,
    pub end: Vec2,
    pub steps: usize,
}

/// Integrates `γ̇ = u(γ)` with classical RK4 at step `dt` from `start` up to
/// `t_end` (the last step is shortened to land on `t_end`), accumulating the
/// ball-supremum of the gradient with the trapezoidal rule.  Integration
/// stops early when the curve leaves `domain`; the step that leaves is
/// replaced by an Euler step bisected onto the boundary.
pub fn curve_gradient_integral<F, D>(
    f: &F,
    start: Vec2,
    eps: f64,
    t_end: f64,
    dt: f64,
    domain: D,
) -> CurveIntegral
where
    F: VelocityField + ?Sized,
    D: Fn(Vec2) -> bool,
{
    let rk4 = |p: Vec2, h: f64| {
        let k1 = f.velocity(p);
        let k2 = f.velocity(p + (0.5 * h) * k1);
        let k3 = f.velocity(p + (0.5 * h) * k2);
        let k4 = f.velocity(p + h * k3);
        p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut p = start;
    let mut t = 0.0;
    let mut g_prev = ball_sup_grad(f, p, eps);
    let mut integral = 0.0;
    let mut steps = 0;
    let mut left = !domain(p);
    while !left && t < t_end {
        let h = dt.min(t_end - t);
        let mut next = rk4(p, h);
        let mut h_used = h;
        if !domain(next) {
            // RK4 stages beyond the wall see the outside field, so land on
            // the boundary with a bisected Euler step from inside (O(h²)).
            let u0 = f.velocity(p);
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if domain(p + mid * u0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            h_used = lo;
            next = p + lo * u0;
            left = true;
        }
        let g = ball_sup_grad(f, next, eps);
        integral += 0.5 * h_used * (g + g_prev);
        g_prev = g;
        p = next;
        t += h_used;
        steps += 1;
    }
    CurveIntegral {
        integral,
        t_reached: t,
        left_domain: left,
        end: p,
        steps,
    }
}

/// Transit time through a rotating pipe along the level curve `s = rho`:
/// a quarter of the ellipse at angular speed `v/(λρ)`.
pub fn turn_transit_time(t: &Turn, rho: f64) -> f64 {
    core::f64::consts::FRAC_PI_2 * t.lambda * rho / t.v
}

/// Closed form of `∫ ‖∇u(γ)‖ dt` (ε = 0) along one quarter turn of the
/// rotating pipe: `(π/4)(λ + 1/λ)`, independent of the level curve and speed.
pub fn turn_gradient_integral_exact(lambda: f64) -> f64 {
    core::f64::consts::FRAC_PI_4 * (lambda + 1.0 / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::rotating_pipe;
    use core::f64::consts::PI;

    #[test]
    fn quarter_turn_time_matches_closed_form() {
        // α = 1, |γ(0)| = 1: a quarter turn takes π/2.
        let t = rotating_pipe(0.5, 1.5, 1.0, 1.0).unwrap();
        let start = Vec2::new(0.0, 1.0);
        let r = curve_gradient_integral(&t, start, 0.0, 10.0, 1e-3, |p| t.active(p));
        assert!(r.left_domain);
        assert!((r.t_reached - PI / 2.0).abs() < 1e-6, "{}", r.t_reached);
    }

    #[test]
    fn zero_radius_integral_matches_closed_form() {
        for lambda in [1.0, 4.0, 16.0] {
            let t = rotating_pipe(1.0, 2.0, lambda, 1.0).unwrap();
            let rho = 1.5;
            let start = Vec2::new(0.0, rho);
            let tt = turn_transit_time(&t, rho);
            let r = curve_gradient_integral(&t, start, 0.0, tt, tt / 4000.0, |p| t.active(p));
            let exact = turn_gradient_integral_exact(lambda);
            assert!((r.integral - exact).abs() < 1e-5 * exact, "λ={lambda}: {} vs {exact}", r.integral);
        }
    }

    #[test]
    fn ball_widening_only_increases_the_integral() {
        let t = rotating_pipe(1.0, 2.0, 1.0, 1.0).unwrap();
        let tt = turn_transit_time(&t, 1.5);
        let a = curve_gradient_integral(&t, Vec2::new(0.0, 1.5), 0.0, tt, tt / 500.0, |p| t.active(p));
        let b = curve_gradient_integral(&t, Vec2::new(0.0, 1.5), 0.25, tt, tt / 500.0, |p| t.active(p));
        assert!(b.integral > a.integral);
        // λ = 1: ‖∇u‖ = v/s, so the ball supremum on s = 1.5 is 1/(1.5 − 0.25).
        let expect = PI / 2.0 * 1.5 / 1.25;
        assert!((b.integral - expect).abs() < 1e-3 * expect, "{}", b.integral);
    }

    #[test]
    fn straight_pipe_has_zero_integrand() {
        let s = Patch::Straight(crate::patch::Straight {
            lo: Vec2::new(0.0, -1.0),
            hi: Vec2::new(10.0, 1.0),
            dir: crate::patch::Dir::PosX,
            speed: 2.0,
        });
        let r = curve_gradient_integral(&s, Vec2::new(0.5, 0.0), 0.3, 2.0, 0.01, |p| s.box_contains(p));
        assert_eq!(r.integral, 0.0);
        assert!(!r.left_domain);
    }
}
