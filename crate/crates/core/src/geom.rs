//! Points, quarter-turn poses and rectangle frames on the unit torus.

use core::ops::{Add, Mul, Neg, Sub};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Both coordinates reduced to `[0, 1)`.
    pub fn wrap(self) -> Vec2 {
        Vec2::new(wrap01(self.x), wrap01(self.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}

/// `x mod 1` in `[0, 1)`.
pub fn wrap01(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// 2×2 matrix stored row-major: `[[m[0], m[1]], [m[2], m[3]]]`.
pub type Mat2 = [f64; 4];

/// Operator (spectral) norm of a 2×2 matrix.
pub fn op_norm(m: Mat2) -> f64 {
    let [a, b, c, d] = m;
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / 2.0).sqrt()
}

/// Exact quarter-turn rotations (counter-clockwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(d: u32) -> Option<Rotation> {
        match d % 360 {
            0 => Some(Rotation::R0),
            90 => Some(Rotation::R90),
            180 => Some(Rotation::R180),
            270 => Some(Rotation::R270),
            _ => None,
        }
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        match self {
            Rotation::R0 => v,
            Rotation::R90 => Vec2::new(-v.y, v.x),
            Rotation::R180 => Vec2::new(-v.x, -v.y),
            Rotation::R270 => Vec2::new(v.y, -v.x),
        }
    }

    pub fn inverse(self) -> Rotation {
        match self {
            Rotation::R0 => Rotation::R0,
            Rotation::R90 => Rotation::R270,
            Rotation::R180 => Rotation::R180,
            Rotation::R270 => Rotation::R90,
        }
    }

    pub fn compose(self, inner: Rotation) -> Rotation {
        Rotation::from_degrees(self.degrees() + inner.degrees()).unwrap_or(Rotation::R0)
    }

    /// Conjugate a Jacobian from local to global frame: `Q J Qᵀ`.
    pub fn conjugate(self, j: Mat2) -> Mat2 {
        let c0 = self.apply(Vec2::new(j[0], j[2]));
        let c1 = self.apply(Vec2::new(j[1], j[3]));
        // columns of Q J are c0, c1; now right-multiply by Qᵀ.
        let r0 = self.apply(Vec2::new(c0.x, c1.x));
        let r1 = self.apply(Vec2::new(c0.y, c1.y));
        [r0.x, r0.y, r1.x, r1.y]
    }
}

/// Pose and size of a rectangle `[0, length] × [−width/2, width/2]` given in
/// its own local coordinates; the local origin sits at `anchor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectFrame {
    pub anchor: Vec2,
    pub rotation: Rotation,
    pub length: f64,
    pub width: f64,
}

impl RectFrame {
    pub fn new(anchor: Vec2, rotation: Rotation, length: f64, width: f64) -> Self {
        RectFrame {
            anchor,
            rotation,
            length,
            width,
        }
    }

    /// Local → global, without torus wrapping.
    pub fn to_global(&self, local: Vec2) -> Vec2 {
        self.anchor + self.rotation.apply(local)
    }

    /// Local → global vector (no translation).
    pub fn vec_to_global(&self, v: Vec2) -> Vec2 {
        self.rotation.apply(v)
    }

    pub fn vec_to_local(&self, v: Vec2) -> Vec2 {
        self.rotation.inverse().apply(v)
    }

    /// Global → local, choosing the lattice translate nearest to the
    /// rectangle (local x within ½ of the centre, local y within ½ of 0).
    pub fn to_local_torus(&self, global: Vec2) -> Vec2 {
        let l = self.vec_to_local(global - self.anchor);
        let cx = self.length / 2.0;
        Vec2::new(l.x - (l.x - cx + 0.5).floor(), l.y - (l.y + 0.5).floor())
    }

    /// Global → local without wrapping (for frames nested in a parent frame).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        self.vec_to_local(p - self.anchor)
    }

    pub fn contains_local(&self, l: Vec2) -> bool {
        l.x >= 0.0 && l.x <= self.length && l.y.abs() <= self.width / 2.0
    }

    /// Express `child` (given in this frame's local coordinates) globally.
    pub fn compose(&self, child: &RectFrame) -> RectFrame {
        RectFrame {
            anchor: self.to_global(child.anchor),
            rotation: self.rotation.compose(child.rotation),
            length: child.length,
            width: child.width,
        }
    }

    /// Axis-aligned bounding box `(min, max)` in the parent coordinates.
    pub fn aabb(&self) -> (Vec2, Vec2) {
        let corners = [
            self.to_global(Vec2::new(0.0, -self.width / 2.0)),
            self.to_global(Vec2::new(0.0, self.width / 2.0)),
            self.to_global(Vec2::new(self.length, -self.width / 2.0)),
            self.to_global(Vec2::new(self.length, self.width / 2.0)),
        ];
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            lo = Vec2::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Vec2::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        (lo, hi)
    }

    /// Sub-rectangle `[x0, x1] × [y0, y1]` in this frame's local coordinates,
    /// returned as a frame with the same rotation.
    pub fn sub_rect(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> RectFrame {
        let yc = (y0 + y1) / 2.0;
        RectFrame {
            anchor: self.to_global(Vec2::new(x0, yc)),
            rotation: self.rotation,
            length: x1 - x0,
            width: y1 - y0,
        }
    }
}

/// A closed segment between two points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}
