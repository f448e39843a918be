//! Explicit enumeration of the rectangle tree behind `b_q` and of the
//! distinguished collections built on it: extremity-free rectangles `E_k`,
//! middle rectangles `M_k`, good rectangles `G_k`, and the sets `D`, `C`,
//! `Γ`, `S` and `F` expressed as rectangles in torus coordinates.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::bq::AnalyticField;
use crate::error::{CoreError, Result};
use crate::geom::{RectFrame, Vec2};

/// Largest number of nodes [`build_tree`] will enumerate.
pub const MAX_NODES: usize = 4_000_000;

/// One rectangle of the tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeNode {
    pub level: usize,
    pub parent: Option<usize>,
    /// Index among the parent's `2n` children (`0..n` upper row).
    pub child_index: usize,
    /// Global pose (the rectangle is `[0, length] × [−width/2, width/2]`).
    pub frame: RectFrame,
    pub in_e: bool,
    pub in_m: bool,
    pub in_g: bool,
}

/// All rectangles `R_0, …, R_q` of a built field.
#[derive(Clone, Debug, PartialEq)]
pub struct PipeTree {
    pub q: usize,
    pub nodes: Vec<TreeNode>,
    /// `nodes[level_start[k]..level_start[k+1]]` are the level-`k` nodes.
    pub level_start: Vec<usize>,
}

/// Enumerates the tree of `field` breadth-first.
pub fn build_tree(field: &AnalyticField) -> Result<PipeTree> {
    let q = field.q;
    let mut total: usize = 1;
    let mut count: usize = 1;
    for k in 0..q {
        count = count.saturating_mul(field.blocks[k].children.len());
        total = total.saturating_add(count);
    }
    if total > MAX_NODES {
        return Err(CoreError::Precondition(format!(
            "tree of depth {q} has {total} nodes (limit {MAX_NODES})"
        )));
    }
    let mut nodes = Vec::with_capacity(total);
    nodes.push(TreeNode {
        level: 0,
        parent: None,
        child_index: 0,
        frame: field.root,
        in_e: true,
        in_m: true,
        in_g: true,
    });
    let mut level_start = Vec::with_capacity(q + 2);
    level_start.push(0);
    for k in 1..=q {
        let g = &field.blocks[k - 1];
        let n = g.spec.n;
        let drop_m = n.div_ceil(4);
        let lo = level_start[k - 1];
        let hi = nodes.len();
        level_start.push(hi);
        for pi in lo..hi {
            let parent = nodes[pi];
            for (c, cf) in g.children.iter().enumerate() {
                let pos = c % n;
                let e_own = pos != 0 && pos != n - 1;
                let in_e = e_own && (k == 1 || parent.in_e);
                let in_m = pos >= drop_m && pos < n - drop_m;
                nodes.push(TreeNode {
                    level: k,
                    parent: Some(pi),
                    child_index: c,
                    frame: parent.frame.compose(cf),
                    in_e,
                    in_m,
                    in_g: false,
                });
            }
        }
    }
    level_start.push(nodes.len());
    // G_k: in E_k ∩ M_k with the ancestors at levels max(1, k−4)..k−1 in M.
    for i in 1..nodes.len() {
        let nd = nodes[i];
        if !(nd.in_e && nd.in_m) {
            continue;
        }
        let mut ok = true;
        let mut a = nd.parent;
        for _ in 0..4 {
            match a {
                Some(ai) if nodes[ai].level >= 1 => {
                    ok &= nodes[ai].in_m;
                    a = nodes[ai].parent;
                }
                _ => break,
            }
        }
        nodes[i].in_g = ok;
    }
    Ok(PipeTree {
        q,
        nodes,
        level_start,
    })
}

impl PipeTree {
    pub fn level(&self, k: usize) -> &[TreeNode] {
        &self.nodes[self.level_start[k]..self.level_start[k + 1]]
    }

    pub fn count_e(&self, k: usize) -> usize {
        self.level(k).iter().filter(|n| n.in_e).count()
    }

    pub fn count_m(&self, k: usize) -> usize {
        self.level(k).iter().filter(|n| n.in_m).count()
    }

    pub fn count_g(&self, k: usize) -> usize {
        self.level(k).iter().filter(|n| n.in_g).count()
    }

    /// The dissipative set `D_k`: for each `R ∈ G_k` the strip
    /// `[0, L_k/3] × [−A_k/2 − B_k/50, −A_k/2 − B_k/100]` in `R`'s coordinates.
    pub fn d_set(&self, field: &AnalyticField, k: usize) -> Vec<RectFrame> {
        let s = field.scales[k];
        self.level(k)
            .iter()
            .filter(|n| n.in_g)
            .map(|n| {
                n.frame
                    .sub_rect(0.0, s.l / 3.0, -s.a / 2.0 - s.b / 50.0, -s.a / 2.0 - s.b / 100.0)
            })
            .collect()
    }

    /// Lebesgue measure of `D_k`: `#G_k · (B_k/100) · (L_k/3)`.
    pub fn d_measure(&self, field: &AnalyticField, k: usize) -> f64 {
        let s = field.scales[k];
        self.count_g(k) as f64 * (s.b / 100.0) * (s.l / 3.0)
    }

    /// Entry segments `C_k = {0} × [−A_k/4, A_k/4]` over `R ∈ E_k`.
    pub fn c_set(&self, field: &AnalyticField, k: usize) -> Vec<RectFrame> {
        let s = field.scales[k];
        self.level(k)
            .iter()
            .filter(|n| n.in_e)
            .map(|n| n.frame.sub_rect(0.0, 0.0, -s.a / 4.0, s.a / 4.0))
            .collect()
    }

    /// Entry segments `Γ_k = {0} × [−A_k/2 + Ā_{k+1}, A_k/2 − Ā_{k+1}]` over
    /// `R ∈ E_k`; needs `k < q` (for `Ā_{k+1}`).
    pub fn gamma_set(&self, field: &AnalyticField, k: usize) -> Result<Vec<RectFrame>> {
        if k >= field.q {
            return Err(CoreError::Precondition(format!(
                "Γ_{k} needs block level {k} (field has levels < {})",
                field.q
            )));
        }
        let s = field.scales[k];
        let abar = field.blocks[k].a_hat;
        Ok(self
            .level(k)
            .iter()
            .filter(|n| n.in_e)
            .map(|n| n.frame.sub_rect(0.0, 0.0, -s.a / 2.0 + abar, s.a / 2.0 - abar))
            .collect())
    }

    /// Shear strips `S_k`: `[0, L_k] × [±A_k/2 − ℓ, ±A_k/2 + ℓ]` over `R ∈ E_k`.
    pub fn s_set(&self, field: &AnalyticField, k: usize, ell: f64) -> Vec<RectFrame> {
        let s = field.scales[k];
        let mut out = Vec::new();
        for n in self.level(k).iter().filter(|n| n.in_e) {
            for c in [-s.a / 2.0, s.a / 2.0] {
                out.push(n.frame.sub_rect(0.0, s.l, c - ell, c + ell));
            }
        }
        out
    }

    /// `F_k(R)` for a level-`k` node (`k + 1 < q`): rectangles in `R` that
    /// contain the support of the component of `b_{k+2}` transverse to `R`'s
    /// axis.  Per row of children: a strip `[−A', A']` around each child
    /// axis, a strip of width `A'` at each row end, and strips of width `2A'`
    /// straddling each edge shared by neighbouring children — `4n + 2` in
    /// total.
    pub fn f_set(&self, field: &AnalyticField, node: usize) -> Result<Vec<RectFrame>> {
        let nd = self.nodes[node];
        let k = nd.level;
        if k + 1 >= field.q {
            return Err(CoreError::Precondition(format!(
                "F_{k} needs levels {k}, {} as blocks (field has levels < {})",
                k + 1,
                field.q
            )));
        }
        let g = &field.blocks[k];
        let n = g.spec.n;
        let (ap, lp, half) = (g.spec.a_child, g.spec.l_child, g.pitch / 2.0);
        let mut out = Vec::with_capacity(4 * n + 2);
        for row in 0..2 {
            for i in 0..n {
                let c = g.children[row * n + i];
                out.push(nd.frame.compose(&c.sub_rect(0.0, lp, -ap, ap)));
            }
            let first = g.children[row * n];
            let last = g.children[row * n + n - 1];
            // row ends: width A' at the outer edges (sign depends on the
            // child's rotation, so take both edges of the two end children)
            let (lo_first, hi_first) = (first.sub_rect(0.0, lp, -half, -half + ap), first.sub_rect(0.0, lp, half - ap, half));
            let (lo_last, hi_last) = (last.sub_rect(0.0, lp, -half, -half + ap), last.sub_rect(0.0, lp, half - ap, half));
            let outer_first = if lo_first.aabb().0.x < hi_first.aabb().0.x { lo_first } else { hi_first };
            let outer_last = if lo_last.aabb().1.x > hi_last.aabb().1.x { lo_last } else { hi_last };
            out.push(nd.frame.compose(&outer_first));
            out.push(nd.frame.compose(&outer_last));
            for i in 0..n - 1 {
                let a = g.children[row * n + i];
                let b = g.children[row * n + i + 1];
                let (alo, ahi) = (a.sub_rect(0.0, lp, -half, -half + ap), a.sub_rect(0.0, lp, half - ap, half));
                let right_a = if alo.aabb().1.x > ahi.aabb().1.x { alo } else { ahi };
                let (blo, bhi) = (b.sub_rect(0.0, lp, -half, -half + ap), b.sub_rect(0.0, lp, half - ap, half));
                let left_b = if blo.aabb().0.x < bhi.aabb().0.x { blo } else { bhi };
                // merge into one rectangle spanning both strips
                let (l0, _) = right_a.aabb();
                let (_, h1) = left_b.aabb();
                let (y0, y1) = (right_a.aabb().0.y, right_a.aabb().1.y);
                let merged = RectFrame::new(Vec2::new(l0.x, (y0 + y1) / 2.0), crate::geom::Rotation::R0, h1.x - l0.x, y1 - y0);
                out.push(nd.frame.compose(&merged));
            }
        }
        Ok(out)
    }
}

/// Whether a torus point lies in any of the rectangles (closed, with a
/// relative tolerance so that zero-width segments can be hit by points
/// computed on them).
pub fn in_any(rects: &[RectFrame], p: Vec2) -> bool {
    rects.iter().any(|r| {
        let l = r.to_local_torus(p);
        let tol = 1e-12 * (r.length + r.width).max(1e-300);
        l.x >= -tol && l.x <= r.length + tol && l.y.abs() <= r.width / 2.0 + tol
    })
}
