//! The piecewise-analytic velocity field `b_q` on the unit torus.
//!
//! `b_0` is a straight band of width `A_0` through `y = ½` moving with speed
//! `v_0` in the `+x` direction.  `b_q` replaces the band inside the root
//! rectangle `R_0 = (A_0, 1−A_0)²` by a branching–merging block whose children
//! are again blocks, down to level `q − 1`; the level-`q` rectangles carry the
//! straight child pipes of their parents.  All blocks of one level share the
//! same geometry, so the tree is implicit: evaluation descends by arithmetic.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::block::{BlockGeom, BlockSpec};
use crate::error::{CoreError, Result};
use crate::geom::{Mat2, RectFrame, Rotation, Vec2};
use crate::params::ParamTable;
use crate::patch::{clip_to_box, Dir, Patch, Straight};

/// Scalar data of one tree level, copied from the parameter table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelScales {
    pub a: f64,
    pub b: f64,
    pub l: f64,
    pub v: f64,
    pub n: usize,
}

/// `b_q` together with its per-level block geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticField {
    pub q: usize,
    pub a0: f64,
    pub v0: f64,
    /// The level-0 rectangle in torus coordinates.
    pub root: RectFrame,
    /// Block geometry for levels `0..q`.
    pub blocks: Vec<BlockGeom>,
    /// Scales for levels `0..=q`.
    pub scales: Vec<LevelScales>,
}

/// Where a torus point sits in the tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Located {
    /// Deepest block level containing the point, or `None` on the band
    /// outside the root rectangle.
    pub level: Option<usize>,
    /// Global pose of that block.
    pub frame: RectFrame,
    /// The point in the block's coordinates.
    pub local: Vec2,
    /// Stream-function value on the block's centre line.
    pub h_offset: f64,
}

/// Builds `b_q` from the table (levels `0..=q` must exist).
pub fn build_bq(table: &ParamTable, q: usize) -> Result<AnalyticField> {
    if q > table.q_max() {
        return Err(CoreError::Precondition(format!(
            "b_{q} needs table rows up to {q}, table has {}",
            table.q_max()
        )));
    }
    let a0 = table.a0();
    let v0 = table.level(0).v;
    let mut scales = Vec::with_capacity(q + 1);
    for k in 0..=q {
        let lv = table.level(k);
        scales.push(LevelScales {
            a: lv.big_a,
            b: lv.b,
            l: lv.l,
            v: lv.v,
            n: if k == 0 { 0 } else { table.n_int(k) as usize },
        });
    }
    let mut blocks = Vec::with_capacity(q);
    for k in 0..q {
        let (s, c) = (scales[k], scales[k + 1]);
        let spec = BlockSpec {
            l: s.l,
            a: s.a,
            b: s.b,
            a_child: c.a,
            b_child: c.b,
            n: c.n,
            v: s.v,
            l_child: c.l,
        };
        let g = BlockGeom::new(spec).map_err(|e| match e {
            CoreError::Geometry(m) => CoreError::Geometry(format!("level {k}: {m}")),
            CoreError::Precondition(m) => CoreError::Precondition(format!("level {k}: {m}")),
            other => other,
        })?;
        if (g.v_child - c.v).abs() > 1e-9 * c.v {
            return Err(CoreError::Precondition(format!(
                "level {k}: child speed {} disagrees with v_{} = {}",
                g.v_child,
                k + 1,
                c.v
            )));
        }
        blocks.push(g);
    }
    let root = RectFrame::new(Vec2::new(a0, 0.5), Rotation::R0, scales[0].l, scales[0].a + scales[0].b);
    if q > 0 && (root.length - (1.0 - 2.0 * a0)).abs() > 1e-9 {
        return Err(CoreError::Precondition(format!(
            "root rectangle length {} must equal 1 − 2A_0 = {} to sit inside the torus",
            root.length,
            1.0 - 2.0 * a0
        )));
    }
    Ok(AnalyticField {
        q,
        a0,
        v0,
        root,
        blocks,
        scales,
    })
}

impl AnalyticField {
    /// Mean horizontal velocity `m = v_0 A_0` (the band's flux).
    pub fn mean_flux(&self) -> f64 {
        self.v0 * self.a0
    }

    fn band(&self) -> Straight {
        Straight {
            lo: Vec2::new(-1.0, 0.5 - self.a0 / 2.0),
            hi: Vec2::new(2.0, 0.5 + self.a0 / 2.0),
            dir: Dir::PosX,
            speed: self.v0,
        }
    }

    /// Resolve the deepest block containing `p` (any real point; wrapped).
    pub fn locate(&self, p: Vec2) -> Located {
        let mut loc = self.root.to_local_torus(p);
        if self.q == 0 || !self.root.contains_local(loc) {
            return Located {
                level: None,
                frame: self.root,
                local: p.wrap(),
                h_offset: 0.0,
            };
        }
        let mut frame = self.root;
        let mut h_offset = 0.0;
        let mut k = 0;
        while k + 1 < self.q {
            let g = &self.blocks[k];
            let Some(c) = g.child_at(loc) else { break };
            let cf = g.children[c];
            h_offset += g.stream(cf.anchor);
            loc = cf.to_local(loc);
            frame = frame.compose(&cf);
            k += 1;
        }
        Located {
            level: Some(k),
            frame,
            local: loc,
            h_offset,
        }
    }

    pub fn velocity(&self, p: Vec2) -> Vec2 {
        let l = self.locate(p);
        match l.level {
            None => {
                let y = l.local.y;
                if (y - 0.5).abs() <= self.a0 / 2.0 {
                    Vec2::new(self.v0, 0.0)
                } else {
                    Vec2::ZERO
                }
            }
            Some(k) => l.frame.vec_to_global(self.blocks[k].velocity(l.local)),
        }
    }

    /// Absolutely continuous part of `∇b_q` (`[∂_j u_i]`, row-major).
    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        let l = self.locate(p);
        match l.level {
            None => [0.0; 4],
            Some(k) => l.frame.rotation.conjugate(self.blocks[k].jacobian(l.local)),
        }
    }

    /// Stream function `H` with `b_q = ∇⊥H`, normalised to 0 on `y = ½`
    /// along the band; evaluated on the unit cell, so it jumps by the mean
    /// flux across `y = 0`.
    pub fn stream(&self, p: Vec2) -> f64 {
        let l = self.locate(p);
        match l.level {
            None => {
                let y = l.local.y.clamp(0.5 - self.a0 / 2.0, 0.5 + self.a0 / 2.0);
                -self.v0 * (y - 0.5)
            }
            Some(k) => l.h_offset + self.blocks[k].stream(l.local),
        }
    }

    /// The periodic part `H̃ = H + m (y − ½)` of the stream function; then
    /// `b_q = (m, 0) + ∇⊥H̃` with `m` the mean flux.
    pub fn stream_periodic(&self, p: Vec2) -> f64 {
        let w = p.wrap();
        self.stream(w) + self.mean_flux() * (w.y - 0.5)
    }

    /// Flux `∫ u·n` (right-hand normal) through a segment lying in the unit
    /// cell, by Gauss–Legendre quadrature of the closed-form velocity on
    /// exact patch pieces.
    pub fn flux_quadrature(&self, a: Vec2, b: Vec2) -> f64 {
        let d = b - a;
        let band = Patch::Straight(self.band());
        if self.q == 0 {
            return band.flux_quadrature(a, b);
        }
        let Some((t0, t1)) = clip_to_box(a, d, self.root.aabb()) else {
            return band.flux_quadrature(a, b);
        };
        let mut total = 0.0;
        if t0 > 0.0 {
            total += band.flux_quadrature(a, a + t0 * d);
        }
        if t1 < 1.0 {
            total += band.flux_quadrature(a + t1 * d, b);
        }
        let la = self.root.to_local(a + t0 * d);
        let lb = self.root.to_local(a + t1 * d);
        total + self.flux_quadrature_local(0, la, lb)
    }

    /// Flux through a segment given in the coordinates of a level-`k` block,
    /// including everything nested inside its children.
    pub fn flux_quadrature_local(&self, k: usize, a: Vec2, b: Vec2) -> f64 {
        let g = &self.blocks[k];
        if k + 1 >= self.q {
            return g.flux_quadrature(a, b);
        }
        let d = b - a;
        let mut inside: Vec<(f64, f64)> = Vec::new();
        let mut total = 0.0;
        for c in &g.children {
            if let Some((s0, s1)) = clip_to_box(a, d, c.aabb()) {
                total += self.flux_quadrature_local(k + 1, c.to_local(a + s0 * d), c.to_local(a + s1 * d));
                inside.push((s0, s1));
            }
        }
        inside.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(core::cmp::Ordering::Equal));
        let mut t = 0.0;
        for (s0, s1) in inside {
            if s0 > t {
                total += g.flux_quadrature(a + t * d, a + s0 * d);
            }
            t = t.max(s1);
        }
        if t < 1.0 {
            total += g.flux_quadrature(a + t * d, b);
        }
        total
    }

    /// Largest speed of the field.
    pub fn max_speed(&self) -> f64 {
        self.blocks.iter().map(|g| g.max_speed()).fold(self.v0, f64::max)
    }

    /// Smallest geometric feature (lane or pipe width) over all levels.
    pub fn min_scale(&self) -> f64 {
        let mut m = self.a0;
        for g in &self.blocks {
            m = m.min(g.a_hat);
        }
        if let Some(s) = self.scales.last() {
            m = m.min(s.a);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::desk_table;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn unif(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn field(q: usize) -> AnalyticField {
        let t = desk_table(0.1, 0.3, None, q.max(1)).unwrap();
        build_bq(&t, q).unwrap()
    }

    #[test]
    fn band_only_at_level_zero() {
        let f = field(0);
        assert_eq!(f.velocity(Vec2::new(0.3, 0.5)), Vec2::new(1.0, 0.0));
        assert_eq!(f.velocity(Vec2::new(0.3, 0.6)), Vec2::ZERO);
        let flux = f.flux_quadrature(Vec2::new(0.3, 0.0), Vec2::new(0.3, 1.0));
        assert!((flux - 0.1).abs() < 1e-14, "{flux}");
    }

    #[test]
    fn builds_levels_one_and_two() {
        for q in 1..=2 {
            let f = field(q);
            assert_eq!(f.blocks.len(), q);
            assert_eq!(f.blocks[0].children.len(), 20);
        }
    }

    #[test]
    fn large_a0_is_a_geometry_error() {
        let t = desk_table(0.25, 0.3, None, 2);
        match t {
            Ok(t) => assert!(build_bq(&t, 2).is_err()),
            Err(_) => {}
        }
    }

    #[test]
    fn vertical_cross_sections_carry_the_band_flux() {
        for q in 0..=2 {
            let f = field(q);
            for k in 0..40 {
                let x = (k as f64 + 0.5) / 40.0;
                // bottom → top: the right-hand normal points to +x
                let flux = f.flux_quadrature(Vec2::new(x, 0.0), Vec2::new(x, 1.0));
                assert!((flux - f.mean_flux()).abs() < 1e-10 * f.mean_flux(), "q={q} x={x}: {flux}");
            }
        }
    }

    #[test]
    fn random_boxes_have_zero_net_flux() {
        let f = field(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let c = Vec2::new(0.05 + 0.9 * unif(&mut rng), 0.05 + 0.9 * unif(&mut rng));
            let h = Vec2::new(0.001 + 0.04 * unif(&mut rng), 0.001 + 0.04 * unif(&mut rng));
            let p = [
                c + Vec2::new(-h.x, -h.y),
                c + Vec2::new(h.x, -h.y),
                c + Vec2::new(h.x, h.y),
                c + Vec2::new(-h.x, h.y),
            ];
            let net: f64 = (0..4).map(|i| f.flux_quadrature(p[i], p[(i + 1) % 4])).sum();
            let scale = 4.0 * (h.x + h.y) * f.max_speed();
            assert!(net.abs() <= 1e-8 * scale, "box at {c:?}: net {net}");
        }
    }

    #[test]
    fn stream_differences_equal_quadrature_flux() {
        let f = field(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let a = Vec2::new(0.02 + 0.96 * unif(&mut rng), 0.02 + 0.96 * unif(&mut rng));
            let b = a + Vec2::new(0.1 * (unif(&mut rng) - 0.5), 0.1 * (unif(&mut rng) - 0.5));
            if !(b.x > 0.0 && b.x < 1.0 && b.y > 0.0 && b.y < 1.0) {
                continue;
            }
            let q = f.flux_quadrature(a, b);
            let s = f.stream(a) - f.stream(b);
            assert!((q - s).abs() < 1e-9 * f.mean_flux(), "{a:?} → {b:?}: {q} vs {s}");
        }
    }

    #[test]
    fn periodic_stream_is_periodic() {
        let f = field(2);
        for k in 0..20 {
            let x = (k as f64 + 0.3) / 20.0;
            let lo = f.stream_periodic(Vec2::new(x, 0.0));
            let hi = f.stream_periodic(Vec2::new(x, 1.0 - 1e-15));
            assert!((lo - hi).abs() < 1e-12);
            let y = x;
            let l = f.stream_periodic(Vec2::new(0.0, y));
            let r = f.stream_periodic(Vec2::new(1.0 - 1e-15, y));
            assert!((l - r).abs() < 1e-12, "y={y}: {l} vs {r}");
        }
    }

    #[test]
    fn refinement_only_changes_the_field_inside_rectangles() {
        let f1 = field(1);
        let f2 = field(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut outside = 0;
        for _ in 0..4000 {
            let p = Vec2::new(unif(&mut rng), unif(&mut rng));
            let l = f2.locate(p);
            if l.level == Some(1) {
                continue;
            }
            outside += 1;
            assert_eq!(f1.velocity(p), f2.velocity(p), "{p:?}");
        }
        assert!(outside > 1000);
    }

    #[test]
    fn jacobian_is_trace_free() {
        let f = field(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = Vec2::new(unif(&mut rng), unif(&mut rng));
            let j = f.jacobian(p);
            assert!((j[0] + j[3]).abs() <= 1e-9 * (j[1].abs() + j[2].abs() + 1.0));
        }
    }
}
