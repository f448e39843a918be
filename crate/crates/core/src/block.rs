//! The branching–merging block: one straight pipe of width `A` splits into
//! `2n` slow vertical pipes of width `A'` (each the centre of a child
//! rectangle of length `L'` and width `A' + B'`) and merges back.
//!
//! Block-local coordinates are `[0, L] × [−(A+B)/2, (A+B)/2]`; the incoming
//! and outgoing pipe occupies `|y| ≤ A/2` at `x = 0` and `x = L` and carries
//! speed `v` in the `+x` direction.  The upper half is built explicitly and
//! the lower half is its mirror image `u ↦ (u₁, −u₂)`, so the stream function
//! is odd in `y` and vanishes on the centre line.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::geom::{Mat2, Rotation, RectFrame, Vec2};
use crate::patch::{clip_to_box, Dir, Patch, Straight, Turn};

/// Scalar parameters of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockSpec {
    /// Length `L` of the block.
    pub l: f64,
    /// Width `A` of the through-going pipe.
    pub a: f64,
    /// Clearance `B` on both sides of the pipe (block width is `A + B`).
    pub b: f64,
    /// Width `A'` of the child pipes.
    pub a_child: f64,
    /// Clearance `B'` of the child rectangles.
    pub b_child: f64,
    /// Number of children per side.
    pub n: usize,
    /// Speed `v` of the through-going pipe.
    pub v: f64,
    /// Length `L'` of the child rectangles.
    pub l_child: f64,
}

/// Geometry and closed-form patches of one branching–merging block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGeom {
    pub spec: BlockSpec,
    /// Lane width `Â = A / (2n)`.
    pub a_hat: f64,
    /// Horizontal stretch of the turning patches, `λ = A' / Â`.
    pub lambda: f64,
    /// Speed in the child pipes, `v' = v Â / A'`.
    pub v_child: f64,
    /// Left margin before the first child rectangle.
    pub m_left: f64,
    /// Child pitch `A' + B'`.
    pub pitch: f64,
    /// Patches of both halves; upper half first.
    pub patches: Vec<Patch>,
    /// Child frames in block coordinates: `0..n` upper row (rotated 90°,
    /// flowing up), `n..2n` lower row (rotated 270°, flowing down).
    pub children: Vec<RectFrame>,
}

fn geometry<T>(msg: alloc::string::String) -> Result<T> {
    Err(CoreError::Geometry(msg))
}

impl BlockGeom {
    /// Builds the block, checking every geometric constraint that keeps the
    /// pipes from overlapping.
    pub fn new(spec: BlockSpec) -> Result<BlockGeom> {
        let BlockSpec {
            l,
            a,
            b,
            a_child: ap,
            b_child: bp,
            n,
            v,
            l_child: lp,
        } = spec;
        let all_pos = [l, a, b, ap, bp, v, lp].iter().all(|x| *x > 0.0 && x.is_finite());
        if !all_pos {
            return Err(CoreError::Precondition(format!(
                "block parameters must be positive and finite: {spec:?}"
            )));
        }
        if n < 2 {
            return Err(CoreError::Precondition(format!("block needs n >= 2 (got {n})")));
        }
        let nf = n as f64;
        let tol = 1e-12 * l.max(a + b);
        let l_expected = nf * (ap + bp) + 2.0 * a;
        if (l - l_expected).abs() > 1e-9 * l {
            return Err(CoreError::Precondition(format!(
                "block length L = {l} differs from n(A'+B') + 2A = {l_expected}"
            )));
        }
        let a_hat = a / (2.0 * nf);
        let lambda = ap / a_hat;
        if lambda < 1.0 - 1e-12 {
            return geometry(format!("child pipes narrower than lanes: A' = {ap} < A/(2n) = {a_hat}"));
        }
        if bp < ap {
            return geometry(format!("child clearance B' = {bp} smaller than child width A' = {ap}"));
        }
        if b < 3.0 * a {
            return geometry(format!("clearance B = {b} < 3A = {}: no room for the merge", 3.0 * a));
        }
        let lp_max = (b - 4.0 * a_hat - a) / 2.0;
        if lp > lp_max + tol {
            return geometry(format!("child length L' = {lp} exceeds (B − 4Â − A)/2 = {lp_max}"));
        }
        let pitch = ap + bp;
        let m_left = (ap - bp / 2.0).max(0.0);
        if m_left > 2.0 * a {
            return geometry(format!("left margin {m_left} exceeds 2A = {}", 2.0 * a));
        }
        let t = |j: usize| m_left - ap + bp / 2.0 + (j as f64 - 1.0) * pitch;
        let merge_x = l - 1.5 * a;
        if t(n) + 3.0 * ap > merge_x + tol {
            return geometry(format!(
                "last branch ends at {} beyond the merge at {merge_x}",
                t(n) + 3.0 * ap
            ));
        }
        let v_child = v / lambda;
        let h_vert = b / 2.0 - 3.0 * a_hat;
        let top = (a + b) / 2.0;

        let mut upper: Vec<Patch> = Vec::with_capacity(5 * n + 3);
        for j in 1..=n {
            let jf = j as f64;
            let tj = t(j);
            let lane_lo = a / 2.0 - jf * a_hat;
            if tj > 0.0 {
                upper.push(Patch::Straight(Straight {
                    lo: Vec2::new(0.0, lane_lo),
                    hi: Vec2::new(tj, lane_lo + a_hat),
                    dir: Dir::PosX,
                    speed: v,
                }));
            }
            let c1 = Vec2::new(tj, a / 2.0 - (jf - 2.0) * a_hat);
            upper.push(Patch::Turn(Turn {
                center: c1,
                lambda,
                r: a_hat,
                big_r: 2.0 * a_hat,
                sx: 1.0,
                sy: -1.0,
                sigma: 1.0,
                v,
            }));
            upper.push(Patch::Straight(Straight {
                lo: Vec2::new(tj + ap, c1.y),
                hi: Vec2::new(tj + 2.0 * ap, c1.y + h_vert),
                dir: Dir::PosY,
                speed: v_child,
            }));
            let c2 = Vec2::new(tj + 3.0 * ap, c1.y + h_vert);
            upper.push(Patch::Turn(Turn {
                center: c2,
                lambda,
                r: a_hat,
                big_r: 2.0 * a_hat,
                sx: -1.0,
                sy: 1.0,
                sigma: -1.0,
                v,
            }));
            if merge_x > c2.x {
                upper.push(Patch::Straight(Straight {
                    lo: Vec2::new(c2.x, c2.y + a_hat),
                    hi: Vec2::new(merge_x, c2.y + 2.0 * a_hat),
                    dir: Dir::PosX,
                    speed: v,
                }));
            }
        }
        upper.push(Patch::Turn(Turn {
            center: Vec2::new(merge_x, b / 2.0 - a / 2.0),
            lambda: 1.0,
            r: a / 2.0,
            big_r: a,
            sx: 1.0,
            sy: 1.0,
            sigma: -1.0,
            v,
        }));
        upper.push(Patch::Straight(Straight {
            lo: Vec2::new(l - a, a),
            hi: Vec2::new(l - a / 2.0, b / 2.0 - a / 2.0),
            dir: Dir::NegY,
            speed: v,
        }));
        upper.push(Patch::Turn(Turn {
            center: Vec2::new(l, a),
            lambda: 1.0,
            r: a / 2.0,
            big_r: a,
            sx: -1.0,
            sy: -1.0,
            sigma: 1.0,
            v,
        }));

        // Every upper patch must lie in [0, L] × [0, top] and the patches must
        // have pairwise disjoint interiors.
        for p in &upper {
            let (lo, hi) = p.bbox();
            if lo.x < -tol || hi.x > l + tol || lo.y < -tol || hi.y > top + tol {
                return geometry(format!("patch {p:?} leaves the block"));
            }
        }
        for i in 0..upper.len() {
            let (lo_i, hi_i) = upper[i].bbox();
            for pj in &upper[i + 1..] {
                let (lo_j, hi_j) = pj.bbox();
                let ox = hi_i.x.min(hi_j.x) - lo_i.x.max(lo_j.x);
                let oy = hi_i.y.min(hi_j.y) - lo_i.y.max(lo_j.y);
                if ox > tol && oy > tol {
                    return geometry(format!("patches overlap: {:?} and {pj:?}", upper[i]));
                }
            }
        }

        let mut patches = upper.clone();
        patches.extend(upper.iter().map(mirror));

        let y_child = a / 2.0 + a_hat;
        let mut children = Vec::with_capacity(2 * n);
        for j in 1..=n {
            let xc = t(j) + 1.5 * ap;
            children.push(RectFrame::new(Vec2::new(xc, y_child), Rotation::R90, lp, pitch));
        }
        for j in 1..=n {
            let xc = t(j) + 1.5 * ap;
            children.push(RectFrame::new(Vec2::new(xc, -y_child), Rotation::R270, lp, pitch));
        }

        Ok(BlockGeom {
            spec,
            a_hat,
            lambda,
            v_child,
            m_left,
            pitch,
            patches,
            children,
        })
    }

    /// Half-width of the block, `(A + B)/2`.
    pub fn half_width(&self) -> f64 {
        (self.spec.a + self.spec.b) / 2.0
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.spec.l && p.y.abs() <= self.half_width()
    }

    /// Index of the child rectangle containing `p` (block coordinates).
    pub fn child_at(&self, p: Vec2) -> Option<usize> {
        let n = self.spec.n;
        let j = ((p.x - self.m_left) / self.pitch).floor();
        if !(j >= -1.0 && j <= n as f64) {
            return None;
        }
        let base = if p.y >= 0.0 { 0 } else { n };
        // Neighbouring columns share an edge; test both candidates.
        let j = j as isize;
        for cand in [j, j - 1] {
            if cand >= 0 && (cand as usize) < n {
                let idx = base + cand as usize;
                let c = &self.children[idx];
                if c.contains_local(c.to_local(p)) {
                    return Some(idx);
                }
            }
        }
        None
    }

    fn patch_at(&self, p: Vec2) -> Option<&Patch> {
        let half = self.patches.len() / 2;
        let range = if p.y >= 0.0 { 0..half } else { half..self.patches.len() };
        self.patches[range].iter().find(|pa| pa.box_contains(p))
    }

    /// Block velocity (without any refinement inside the children).
    pub fn velocity(&self, p: Vec2) -> Vec2 {
        self.patch_at(p).map_or(Vec2::ZERO, |pa| pa.velocity(p))
    }

    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        self.patch_at(p).map_or([0.0; 4], |pa| pa.jacobian(p))
    }

    /// Stream function `H` with `u = ∇⊥H`, normalised by `H = 0` on the
    /// centre line; `H = ∓vA/2` on the upper/lower edge.
    ///
    /// Integrates `∂_y H = −u₁` down the vertical line through `p` from the
    /// top edge, patch by patch, using each patch's closed-form stream
    /// function (exact, no quadrature).
    pub fn stream(&self, p: Vec2) -> f64 {
        let BlockSpec { a, l, v, .. } = self.spec;
        let top = self.half_width();
        // Boxes are taken half-open in x so that shared vertical edges are
        // counted once; at x = L use the left limit.
        let x = if p.x >= l { l * (1.0 - 1e-15) } else { p.x };
        let y = p.y.clamp(-top, top);
        let mut h = -v * a / 2.0;
        for pa in &self.patches {
            let (lo, hi) = pa.bbox();
            if !(x >= lo.x && x < hi.x) || hi.y <= y {
                continue;
            }
            let y_hi = hi.y.min(top);
            let y_lo = lo.y.max(y);
            if y_hi <= y_lo {
                continue;
            }
            h += pa.stream(Vec2::new(x, y_lo)) - pa.stream(Vec2::new(x, y_hi));
        }
        h
    }

    /// Flux `∫ u·n` (right-hand normal) through segment `a → b` from the
    /// block's own patches, by quadrature of the velocity.
    pub fn flux_quadrature(&self, a: Vec2, b: Vec2) -> f64 {
        let d = b - a;
        self.patches
            .iter()
            .filter(|pa| clip_to_box(a, d, pa.bbox()).is_some())
            .map(|pa| pa.flux_quadrature(a, b))
            .sum()
    }

    /// Largest speed among the block's patches.
    pub fn max_speed(&self) -> f64 {
        self.patches.iter().map(|p| p.max_speed()).fold(0.0, f64::max)
    }
}

/// Mirror image of an upper-half patch under `y ↦ −y`, `u ↦ (u₁, −u₂)`.
fn mirror(p: &Patch) -> Patch {
    match *p {
        Patch::Straight(s) => Patch::Straight(Straight {
            lo: Vec2::new(s.lo.x, -s.hi.y),
            hi: Vec2::new(s.hi.x, -s.lo.y),
            dir: match s.dir {
                Dir::PosY => Dir::NegY,
                Dir::NegY => Dir::PosY,
                d => d,
            },
            speed: s.speed,
        }),
        Patch::Turn(t) => Patch::Turn(Turn {
            center: Vec2::new(t.center.x, -t.center.y),
            sy: -t.sy,
            sigma: -t.sigma,
            ..t
        }),
    }
}
