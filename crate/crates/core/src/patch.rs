//! Closed-form velocity patches: straight pipe segments and quarter-turn
//! elliptic annuli (the rescaled rotating pipe).
//!
//! Every patch carries a stream function `h` with `u = ∇⊥h = (−∂_y h, ∂_x h)`
//! that is continuous on the patch's bounding box and constant where the
//! velocity vanishes; this is what makes the assembled fields exactly
//! divergence-free across patch boundaries.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::geom::{Mat2, Vec2};

/// Flow direction of a straight segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    PosX,
    NegX,
    PosY,
    NegY,
}

/// Constant velocity `speed · dir` on the box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Straight {
    pub lo: Vec2,
    pub hi: Vec2,
    pub dir: Dir,
    pub speed: f64,
}

impl Straight {
    pub fn velocity(&self) -> Vec2 {
        let v = self.speed;
        match self.dir {
            Dir::PosX => Vec2::new(v, 0.0),
            Dir::NegX => Vec2::new(-v, 0.0),
            Dir::PosY => Vec2::new(0.0, v),
            Dir::NegY => Vec2::new(0.0, -v),
        }
    }

    fn stream(&self, p: Vec2) -> f64 {
        let v = self.speed;
        let cy = p.y.clamp(self.lo.y, self.hi.y) - self.lo.y;
        let cx = p.x.clamp(self.lo.x, self.hi.x) - self.lo.x;
        match self.dir {
            Dir::PosX => -v * cy,
            Dir::NegX => v * cy,
            Dir::PosY => v * cx,
            Dir::NegY => -v * cx,
        }
    }
}

/// Quarter of an elliptic annulus `r ≤ s ≤ R`, `s = √((dx/λ)² + dy²)`,
/// with stream function `h = σ·v·s` (σ = −1 clockwise, +1 counter-clockwise).
///
/// Horizontal traces have speed `v` and width `R − r`; vertical traces have
/// speed `v/λ` and width `λ(R − r)`.  The active quadrant is
/// `sx·dx ≥ 0, sy·dy ≥ 0` relative to `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Turn {
    pub center: Vec2,
    pub lambda: f64,
    pub r: f64,
    pub big_r: f64,
    pub sx: f64,
    pub sy: f64,
    pub sigma: f64,
    pub v: f64,
}

impl Turn {
    fn s_of(&self, p: Vec2) -> (f64, f64, f64) {
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        ((dx / self.lambda).hypot(dy), dx, dy)
    }

    fn in_quadrant(&self, dx: f64, dy: f64) -> bool {
        self.sx * dx >= 0.0 && self.sy * dy >= 0.0
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let c = self.center;
        let far = Vec2::new(c.x + self.sx * self.lambda * self.big_r, c.y + self.sy * self.big_r);
        (
            Vec2::new(c.x.min(far.x), c.y.min(far.y)),
            Vec2::new(c.x.max(far.x), c.y.max(far.y)),
        )
    }

    pub fn active(&self, p: Vec2) -> bool {
        let (s, dx, dy) = self.s_of(p);
        self.in_quadrant(dx, dy) && s >= self.r && s <= self.big_r
    }

    pub fn velocity(&self, p: Vec2) -> Vec2 {
        let (s, dx, dy) = self.s_of(p);
        if !(self.in_quadrant(dx, dy) && s >= self.r && s <= self.big_r) {
            return Vec2::ZERO;
        }
        let k = self.sigma * self.v;
        Vec2::new(-k * dy / s, k * dx / (self.lambda * self.lambda * s))
    }

    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        let (s, dx, dy) = self.s_of(p);
        if !(self.in_quadrant(dx, dy) && s >= self.r && s <= self.big_r) {
            return [0.0; 4];
        }
        let k = self.sigma * self.v / (self.lambda * self.lambda * s * s * s);
        [k * dx * dy, -k * dx * dx, k * dy * dy, -k * dx * dy]
    }

    fn stream(&self, p: Vec2) -> f64 {
        let (s, _, _) = self.s_of(p);
        self.sigma * self.v * s.clamp(self.r, self.big_r)
    }

    /// Parameters `t` where the line `p + t·d` crosses `s = radius`.
    fn crossings(&self, p: Vec2, d: Vec2, radius: f64, out: &mut Vec<f64>) {
        let l2 = self.lambda * self.lambda;
        let px = p.x - self.center.x;
        let py = p.y - self.center.y;
        let a = d.x * d.x / l2 + d.y * d.y;
        let b = 2.0 * (px * d.x / l2 + py * d.y);
        let c = px * px / l2 + py * py - radius * radius;
        if a == 0.0 {
            return;
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return;
        }
        let sq = disc.sqrt();
        // numerically stable roots
        let qq = -0.5 * (b + b.signum() * sq);
        if qq != 0.0 {
            out.push(qq / a);
            out.push(c / qq);
        } else {
            out.push(0.0);
        }
    }
}

/// The rotating pipe on `[0, λR] × [0, R]`: enters through `{0} × [r, R]`
/// with velocity `(v, 0)` and leaves through `[λr, λR] × {0}` with
/// velocity `(0, −v/λ)`.
pub fn rotating_pipe(r: f64, big_r: f64, lambda: f64, v: f64) -> Result<Turn> {
    if !(r > 0.0 && big_r > r && v > 0.0 && lambda >= 1.0) || !(big_r.is_finite() && lambda.is_finite()) {
        return Err(CoreError::Domain(alloc::format!(
            "rotating pipe needs 0 < r < R, v > 0, lambda >= 1 (got r={r}, R={big_r}, lambda={lambda}, v={v})"
        )));
    }
    Ok(Turn {
        center: Vec2::ZERO,
        lambda,
        r,
        big_r,
        sx: 1.0,
        sy: 1.0,
        sigma: -1.0,
        v,
    })
}

/// One closed-form piece of a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Patch {
    Straight(Straight),
    Turn(Turn),
}

impl Patch {
    pub fn bbox(&self) -> (Vec2, Vec2) {
        match self {
            Patch::Straight(s) => (s.lo, s.hi),
            Patch::Turn(t) => t.bbox(),
        }
    }

    pub fn box_contains(&self, p: Vec2) -> bool {
        let (lo, hi) = self.bbox();
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    /// Velocity at a point inside the bounding box.
    pub fn velocity(&self, p: Vec2) -> Vec2 {
        match self {
            Patch::Straight(s) => s.velocity(),
            Patch::Turn(t) => t.velocity(p),
        }
    }

    /// Absolutely continuous part of `∇u` (jumps across walls excluded).
    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        match self {
            Patch::Straight(_) => [0.0; 4],
            Patch::Turn(t) => t.jacobian(p),
        }
    }

    /// Local stream function; meaningful for differences inside the box.
    pub fn stream(&self, p: Vec2) -> f64 {
        match self {
            Patch::Straight(s) => s.stream(p),
            Patch::Turn(t) => t.stream(p),
        }
    }

    pub fn max_speed(&self) -> f64 {
        match self {
            Patch::Straight(s) => s.speed,
            Patch::Turn(t) => t.v,
        }
    }

    /// Smallest geometric length of the patch.
    pub fn min_scale(&self) -> f64 {
        match self {
            Patch::Straight(s) => (s.hi.x - s.lo.x).min(s.hi.y - s.lo.y),
            Patch::Turn(t) => t.big_r - t.r,
        }
    }

    /// `∫ u·n ds` over the part of segment `a → b` inside the bounding box,
    /// with `n` the right-hand normal of the direction `b − a`, evaluated by
    /// Gauss–Legendre quadrature of the velocity between exact breakpoints.
    pub fn flux_quadrature(&self, a: Vec2, b: Vec2) -> f64 {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return 0.0;
        }
        let n = Vec2::new(d.y / len, -d.x / len);
        let Some((t0, t1)) = clip_to_box(a, d, self.bbox()) else {
            return 0.0;
        };
        let mut breaks = Vec::with_capacity(6);
        breaks.push(t0);
        breaks.push(t1);
        if let Patch::Turn(t) = self {
            let mut xs = Vec::with_capacity(4);
            t.crossings(a, d, t.r, &mut xs);
            t.crossings(a, d, t.big_r, &mut xs);
            for x in xs {
                if x > t0 && x < t1 {
                    breaks.push(x);
                }
            }
        }
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 <= s0 {
                continue;
            }
            let mid = a + (0.5 * (s0 + s1)) * d;
            let active = match self {
                Patch::Straight(_) => true,
                Patch::Turn(t) => t.active(mid),
            };
            if !active {
                continue;
            }
            // composite 4 × Gauss–Legendre(10)
            let pieces = 4;
            for k in 0..pieces {
                let u0 = s0 + (s1 - s0) * (k as f64) / (pieces as f64);
                let u1 = s0 + (s1 - s0) * ((k + 1) as f64) / (pieces as f64);
                let half = 0.5 * (u1 - u0);
                let mid = 0.5 * (u1 + u0);
                for (x, wgt) in GL10 {
                    let tt = mid + half * x;
                    let p = a + tt * d;
                    let v = match self {
                        Patch::Straight(s) => s.velocity(),
                        // evaluate the closed form without the wall test: the
                        // breakpoints already isolate the active pieces
                        Patch::Turn(t) => {
                            let (s, dx, dy) = t.s_of(p);
                            let kk = t.sigma * t.v;
                            Vec2::new(-kk * dy / s, kk * dx / (t.lambda * t.lambda * s))
                        }
                    };
                    total += wgt * half * v.dot(n) * len;
                }
            }
        }
        total
    }

    /// The same flux from the stream function: `h(entry) − h(exit)`.
    pub fn flux_stream(&self, a: Vec2, b: Vec2) -> f64 {
        let d = b - a;
        let Some((t0, t1)) = clip_to_box(a, d, self.bbox()) else {
            return 0.0;
        };
        self.stream(a + t0 * d) - self.stream(a + t1 * d)
    }
}

/// Parameter interval of `a + t·d`, `t ∈ [0,1]`, inside an axis-aligned box.
pub fn clip_to_box(a: Vec2, d: Vec2, (lo, hi): (Vec2, Vec2)) -> Option<(f64, f64)> {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, dd, l, h) in [(a.x, d.x, lo.x, hi.x), (a.y, d.y, lo.y, hi.y)] {
        if dd == 0.0 {
            if p < l || p > h {
                return None;
            }
        } else {
            let (mut e0, mut e1) = ((l - p) / dd, (h - p) / dd);
            if e0 > e1 {
                core::mem::swap(&mut e0, &mut e1);
            }
            t0 = t0.max(e0);
            t1 = t1.min(e1);
        }
    }
    if t1 > t0 {
        Some((t0, t1))
    } else {
        None
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, 10 points.
const GL10: [(f64, f64); 10] = [
    (-0.973_906_528_517_171_7, 0.066_671_344_308_688_14),
    (-0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (-0.679_409_568_299_024_4, 0.219_086_362_515_982_04),
    (-0.433_395_394_129_247_2, 0.269_266_719_309_996_35),
    (-0.148_874_338_981_631_2, 0.295_524_224_714_752_87),
    (0.148_874_338_981_631_2, 0.295_524_224_714_752_87),
    (0.433_395_394_129_247_2, 0.269_266_719_309_996_35),
    (0.679_409_568_299_024_4, 0.219_086_362_515_982_04),
    (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (0.973_906_528_517_171_7, 0.066_671_344_308_688_14),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_lambda_has_constant_speed() {
        let t = rotating_pipe(1.0, 2.0, 1.0, 3.0).unwrap();
        for k in 1..10 {
            let ang = 0.15 * k as f64;
            let rad = 1.0 + 0.1 * k as f64;
            let p = Vec2::new(rad * ang.cos(), rad * ang.sin());
            assert!((t.velocity(p).norm() - 3.0).abs() < 1e-14);
        }
        assert_eq!(t.velocity(Vec2::new(0.5, 0.5)), Vec2::ZERO);
    }

    #[test]
    fn traces_match_lemma() {
        let (r, big_r, lam, v) = (0.5, 1.0, 4.0, 2.0);
        let t = rotating_pipe(r, big_r, lam, v).unwrap();
        for y in [0.55, 0.7, 0.95] {
            let w = t.velocity(Vec2::new(0.0, y));
            assert!((w - Vec2::new(v, 0.0)).norm() < 1e-14);
        }
        for y in [0.1, 0.45] {
            assert_eq!(t.velocity(Vec2::new(0.0, y)), Vec2::ZERO);
        }
        for x in [lam * 0.55, lam * 0.8] {
            let w = t.velocity(Vec2::new(x, 0.0));
            assert!((w - Vec2::new(0.0, -v / lam)).norm() < 1e-14);
        }
    }

    #[test]
    fn rotating_pipe_domain_errors() {
        assert!(rotating_pipe(1.0, 0.5, 1.0, 1.0).is_err());
        assert!(rotating_pipe(1.0, 2.0, 0.5, 1.0).is_err());
        assert!(rotating_pipe(1.0, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn jacobian_is_trace_free_and_matches_differences() {
        let t = rotating_pipe(1.0, 2.0, 3.0, 1.5).unwrap();
        let p = Vec2::new(2.0, 1.1);
        let j = t.jacobian(p);
        assert!((j[0] + j[3]).abs() < 1e-14);
        let h = 1e-6;
        let dx = (t.velocity(p + Vec2::new(h, 0.0)) - t.velocity(p - Vec2::new(h, 0.0))).x / (2.0 * h);
        let dy = (t.velocity(p + Vec2::new(0.0, h)) - t.velocity(p - Vec2::new(0.0, h))).x / (2.0 * h);
        assert!((dx - j[0]).abs() < 1e-6 && (dy - j[1]).abs() < 1e-6);
    }

    #[test]
    fn quadrature_flux_equals_stream_flux() {
        let t = Patch::Turn(rotating_pipe(0.3, 0.6, 2.5, 1.7).unwrap());
        let segs = [
            (Vec2::new(-0.1, 0.1), Vec2::new(1.7, 0.7)),
            (Vec2::new(0.2, -0.1), Vec2::new(0.9, 0.8)),
            (Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.6)),
            (Vec2::new(0.0, 0.0), Vec2::new(1.5, 0.0)),
        ];
        for (a, b) in segs {
            let q = t.flux_quadrature(a, b);
            let s = t.flux_stream(a, b);
            assert!((q - s).abs() < 1e-11, "{q} vs {s}");
        }
        // full inlet: flux v (R − r) to the right
        let q = t.flux_quadrature(Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.6));
        assert!((q - 1.7 * 0.3).abs() < 1e-12, "{q}");
    }
}
