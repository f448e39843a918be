//! The recursive parameter system driving the construction: feasibility of
//! `(ε, δ)` for a Hölder exponent `α`, the log-space table of all scale
//! sequences, and certification of the closed-form bounds they obey.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::LN_2;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::logspace::{ln_one_minus_exp, log_sum_exp, SignedLog};

/// The exponent triple that fixes the whole construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeasibilityInput {
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Margins of the three Hölder inequalities and of the `ε ≪ δ` condition.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// `lhs − rhs` of the three Hölder inequalities (strict: must be > 0).
    pub margins: [f64; 3],
    /// `2δ² + δ³ − ε(1+δ)² − 2ε` (must be ≥ 0).
    pub small_eps_margin: f64,
    /// `false` when `ε = 0` or `δ = 0`: the inequalities are evaluated but
    /// the pair lies on the boundary of the admissible open set.
    pub open_condition: bool,
    pub feasible: bool,
    /// Largest `ε̃` with margin_i > ε̃·(1+δ)^{p_i}, p = (3, 5, 4); 0 if none.
    pub eps_tilde: f64,
}

/// The common factor `3ε + 3δ + (1+δ)²/(2+δ)` of the Hölder inequalities.
fn holder_factor(eps: f64, delta: f64) -> f64 {
    3.0 * eps + 3.0 * delta + (1.0 + delta).powi(2) / (2.0 + delta)
}

/// Evaluates the feasibility inequalities for `(α, ε, δ)`.
///
/// Negative `ε`/`δ` are domain errors; zero values are evaluated but flagged
/// as outside the open condition (and therefore not feasible).
pub fn check_feasibility(input: FeasibilityInput) -> Result<FeasibilityReport> {
    let FeasibilityInput { alpha, eps, delta } = input;
    if !(0.0..1.0).contains(&alpha) {
        return Err(CoreError::Domain(format!("alpha = {alpha} outside [0,1)")));
    }
    if !(eps >= 0.0 && delta >= 0.0) || !eps.is_finite() || !delta.is_finite() {
        return Err(CoreError::Domain(format!(
            "eps = {eps}, delta = {delta} must be non-negative and finite"
        )));
    }
    let k = holder_factor(eps, delta);
    let d1 = 1.0 + delta;
    let m1 = 1.0 / (2.0 + delta) - eps - alpha * d1.powi(4) * k;
    let m2 = 1.0 - (2.0 + delta) * eps - (1.0 + alpha) * d1.powi(5) * k;
    let m3 = (1.0 + 2.0 * d1.powi(5)) / (2.0 + delta) - eps - (2.0 + alpha) * d1.powi(4) * k;
    let margins = [m1, m2, m3];
    let small_eps_margin = 2.0 * delta * delta + delta.powi(3) - eps * d1 * d1 - 2.0 * eps;
    let open_condition = eps > 0.0 && delta > 0.0;
    let feasible = open_condition && margins.iter().all(|m| *m > 0.0) && small_eps_margin >= 0.0;
    let eps_tilde = [m1 / d1.powi(3), m2 / d1.powi(5), m3 / d1.powi(4)]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    Ok(FeasibilityReport {
        margins,
        small_eps_margin,
        open_condition,
        feasible,
        eps_tilde,
    })
}

/// Deterministic search for a feasible pair: `δ = 2^{-k}`, `ε = δ³`,
/// k = 1, 2, …, 64.
pub fn find_eps_delta(alpha: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(CoreError::Domain(format!("alpha = {alpha} outside [0,1)")));
    }
    let mut delta = 1.0;
    for _ in 0..64 {
        delta *= 0.5;
        let eps = delta * delta * delta;
        let rep = check_feasibility(FeasibilityInput { alpha, eps, delta })?;
        if rep.feasible {
            return Ok((eps, delta));
        }
    }
    Err(CoreError::SearchExhausted(format!(
        "no feasible (eps, delta) after 64 halvings for alpha = {alpha}"
    )))
}

/// Which initial conditions and integer conventions the table uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    /// Initial conditions `L_0 = B_0 = 1/4`, exact real `n_q`; table only.
    Paper,
    /// Buildable fields: `L_0 = 1 − 2A_0`, `B_0 = 1 − 3A_0` (the rectangle
    /// `(A_0, 1−A_0)²`), `n_q` rounded to an even integer `≥ n_min`, and
    /// mollification radii floored at `ell_floor`.
    Desk { n_min: u32, ell_floor: f64 },
}

impl Regime {
    pub const DESK_DEFAULT: Regime = Regime::Desk {
        n_min: 10,
        ell_floor: 1.0 / 128.0,
    };
}

/// Default desk-regime `ε` for a given `δ`: keeps `ε < 1/(2+δ)` so that the
/// widened pipes really are wider (`A_{q+1} > Ā_{q+1}`).
pub fn desk_default_eps(delta: f64) -> f64 {
    0.7 / (2.0 + delta)
}

/// One level of the table; every field is a natural log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRow {
    pub q: usize,
    pub log_a: f64,
    /// Exact `ln n_q = ln(a_{q−1}/(2a_q))`; level 0 stores `ln(1/2)` so that
    /// `N_q = Π_{j ≤ q} 2n_j` holds uniformly.
    pub log_n: f64,
    /// The value actually used by the recursion (rounded in desk regime).
    pub log_n_rounded: f64,
    pub log_big_n: f64,
    pub log_big_a: f64,
    /// `ln Ā_q`; level 0 stores `ln A_0`.
    pub log_abar: f64,
    pub log_b: f64,
    pub log_l: f64,
    pub log_v: f64,
    pub log_kappa: f64,
    pub log_ell: f64,
}

/// Linear-space view of one level, for geometry construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelValues {
    pub a: f64,
    pub n: f64,
    pub big_n: f64,
    pub big_a: f64,
    pub abar: f64,
    pub b: f64,
    pub l: f64,
    pub v: f64,
    pub kappa: f64,
    pub ell: f64,
}

/// What to build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableSpec {
    pub log_a0: f64,
    pub eps: f64,
    pub delta: f64,
    /// Used for the feasibility precondition and `ε̃`; `None` checks α = 0.
    pub alpha: Option<f64>,
    pub q_max: usize,
    pub regime: Regime,
}

/// Log-space record of all scale sequences for levels `0..=q_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTable {
    pub eps: f64,
    pub delta: f64,
    pub alpha: Option<f64>,
    pub log_a0: f64,
    pub eps_tilde: f64,
    pub regime: Regime,
    pub rows: Vec<ParamRow>,
    /// Non-fatal diagnostics (waived preconditions, side conditions).
    pub warnings: Vec<String>,
}

impl ParamTable {
    pub fn q_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn a0(&self) -> f64 {
        self.log_a0.exp()
    }

    pub fn level(&self, q: usize) -> LevelValues {
        let r = &self.rows[q];
        LevelValues {
            a: r.log_a.exp(),
            n: r.log_n_rounded.exp(),
            big_n: r.log_big_n.exp(),
            big_a: r.log_big_a.exp(),
            abar: r.log_abar.exp(),
            b: r.log_b.exp(),
            l: r.log_l.exp(),
            v: r.log_v.exp(),
            kappa: r.log_kappa.exp(),
            ell: r.log_ell.exp(),
        }
    }

    /// Integer branching number `n_q` (rounded value) for `q ≥ 1`.
    pub fn n_int(&self, q: usize) -> u64 {
        let n = self.rows[q].log_n_rounded.exp();
        n.round() as u64
    }
}

/// Paper-regime table from a linear `a_0`.
pub fn build_table(a0: f64, eps: f64, delta: f64, q_max: usize) -> Result<ParamTable> {
    if !(a0 > 0.0 && a0 < 1.0) {
        return Err(CoreError::Domain(format!("a0 = {a0} outside (0,1)")));
    }
    build_table_with(TableSpec {
        log_a0: a0.ln(),
        eps,
        delta,
        alpha: None,
        q_max,
        regime: Regime::Paper,
    })
}

/// Largest `ln a_0` satisfying the summability condition `a_0^{ε²δ} ≤ 1/2`.
pub fn max_log_a0_for_summability(eps: f64, delta: f64) -> f64 {
    -LN_2 / (eps * eps * delta)
}

/// Round to the nearest even integer, then clamp below at `n_min`.
fn round_even(n: f64, n_min: u32) -> f64 {
    let r = 2.0 * (n / 2.0).round();
    r.max(f64::from(n_min))
}

struct Linearish {
    a: f64,
    n_exact: f64,
    n_used: f64,
    big_n: f64,
    big_a: f64,
    abar: f64,
    b: SignedLog,
    l: SignedLog,
    v: f64,
}

/// Builds the table for `spec`.
///
/// Subtractive recursions (`B_{q+1}`, `L_{q+1}`) run in sign-tracked log
/// space, so they stay exact far below the `f64` range.
pub fn build_table_with(spec: TableSpec) -> Result<ParamTable> {
    let TableSpec {
        log_a0,
        eps,
        delta,
        alpha,
        q_max,
        regime,
    } = spec;
    if !(log_a0 < 0.0) || !log_a0.is_finite() {
        return Err(CoreError::Domain(format!("ln a0 = {log_a0} must be negative and finite")));
    }
    if !(eps > 0.0 && delta > 0.0) {
        return Err(CoreError::Domain(format!("eps = {eps}, delta = {delta} must be positive")));
    }
    let mut warnings = Vec::new();
    let feas = check_feasibility(FeasibilityInput {
        alpha: alpha.unwrap_or(0.0),
        eps,
        delta,
    })?;
    let summable = log_a0 * eps * eps * delta <= -LN_2 * (1.0 - 1e-12);
    match regime {
        Regime::Paper => {
            if !feas.feasible {
                return Err(CoreError::Precondition(format!(
                    "(eps, delta) = ({eps}, {delta}) infeasible: margins {:?}, small-eps margin {}",
                    feas.margins, feas.small_eps_margin
                )));
            }
            if !summable {
                return Err(CoreError::Precondition(format!(
                    "a0^(eps^2 delta) <= 1/2 requires ln a0 <= {}",
                    max_log_a0_for_summability(eps, delta)
                )));
            }
        }
        Regime::Desk { n_min, ell_floor } => {
            if n_min < 2 || n_min % 2 != 0 {
                return Err(CoreError::Domain(format!("n_min = {n_min} must be even and >= 2")));
            }
            if !(ell_floor >= 0.0) {
                return Err(CoreError::Domain(format!("ell_floor = {ell_floor} must be >= 0")));
            }
            if !feas.feasible {
                warnings.push(format!(
                    "desk regime: feasibility waived for (eps, delta) = ({eps}, {delta})"
                ));
            }
            if !summable {
                warnings.push(format!(
                    "desk regime: summability a0^(eps^2 delta) <= 1/2 waived (a0 = {})",
                    log_a0.exp()
                ));
            }
        }
    }
    // Side condition used inside the proof of the B_q bounds: 40 a0^{εδ} ≤ B_0 / A_0.
    let (l0, b0) = match regime {
        Regime::Paper => (0.25, 0.25),
        Regime::Desk { .. } => {
            let a0 = log_a0.exp();
            (1.0 - 2.0 * a0, 1.0 - 3.0 * a0)
        }
    };
    if !(b0 > 0.0 && l0 > 0.0) {
        return Err(CoreError::Precondition(format!(
            "initial rectangle degenerate: L0 = {l0}, B0 = {b0}"
        )));
    }
    let side = (40.0f64).ln() + eps * delta * log_a0;
    if side > b0.ln() - log_a0 {
        warnings.push(format!(
            "side condition 40 a0^(eps delta) <= B0/A0 violated (lhs ln {side}, rhs ln {})",
            b0.ln() - log_a0
        ));
    }

    // Recurse two levels beyond q_max: ℓ_q needs v_{q+1} and Ā_{q+2}.
    let total = q_max + 3;
    let mut lev: Vec<Linearish> = Vec::with_capacity(total);
    lev.push(Linearish {
        a: log_a0,
        n_exact: -LN_2,
        n_used: -LN_2,
        big_n: 0.0,
        big_a: log_a0,
        abar: log_a0,
        b: SignedLog::from_f64(b0),
        l: SignedLog::from_f64(l0),
        v: 0.0,
    });
    let mut first_degenerate: Option<(usize, &'static str)> = None;
    for q in 0..total - 1 {
        let cur = &lev[q];
        if !(cur.b.is_positive() && cur.l.is_positive()) {
            break;
        }
        let la = cur.a;
        let la_next = (1.0 + delta) * la;
        let n_exact = la - la_next - LN_2;
        let n_used = match regime {
            Regime::Paper => n_exact,
            Regime::Desk { n_min, .. } => {
                if n_exact > 40.0 {
                    return Err(CoreError::Precondition(format!(
                        "desk regime: n_{} = e^{n_exact} too large to round",
                        q + 1
                    )));
                }
                round_even(n_exact.exp(), n_min).ln()
            }
        };
        let abar = cur.big_a - LN_2 - n_used;
        let big_a = abar + (delta * eps - delta / (2.0 + delta)) * la;
        // B_{q+1} = (L_q − n A_{q+1} − 2 A_q) / n
        let b = cur
            .l
            .sub(SignedLog::from_ln(n_used + big_a))
            .sub(SignedLog::from_ln(LN_2 + cur.big_a))
            .scale_ln(-n_used);
        // L_{q+1} = (B_q/2)(1 − a_q^{εδ}) − 4 Ā_{q+1}
        let l = cur
            .b
            .scale_ln(-LN_2 + ln_one_minus_exp(eps * delta * la))
            .sub(SignedLog::from_ln(2.0 * LN_2 + abar));
        let v = cur.v + abar - big_a;
        let big_n = cur.big_n + LN_2 + n_used;
        let next = Linearish {
            a: la_next,
            n_exact,
            n_used,
            big_n,
            big_a,
            abar,
            b,
            l,
            v,
        };
        if first_degenerate.is_none() {
            if !b.is_positive() {
                first_degenerate = Some((q + 1, "B_q <= 0"));
            } else if !l.is_positive() {
                first_degenerate = Some((q + 1, "L_q <= 0"));
            }
        }
        lev.push(next);
    }
    if let Some((level, what)) = first_degenerate {
        if level <= q_max {
            return Err(CoreError::Degenerate { level, what });
        }
    }

    let ell_floor = match regime {
        Regime::Paper => 0.0,
        Regime::Desk { ell_floor, .. } => ell_floor,
    };
    let mut rows = Vec::with_capacity(q_max + 1);
    for q in 0..=q_max {
        let c = &lev[q];
        let ell_ok = q + 2 < lev.len()
            && first_degenerate.map_or(true, |(lvl, _)| lvl > q + 2);
        let mut log_ell = if ell_ok {
            eps * c.a + lev[q + 1].v - c.v + lev[q + 2].abar
        } else {
            f64::NAN
        };
        if ell_floor > 0.0 && !(log_ell >= ell_floor.ln()) {
            log_ell = ell_floor.ln();
        }
        if !log_ell.is_finite() {
            return Err(CoreError::Degenerate {
                level: q + 2,
                what: "mollification radius needs levels q+1, q+2",
            });
        }
        rows.push(ParamRow {
            q,
            log_a: c.a,
            log_n: c.n_exact,
            log_n_rounded: c.n_used,
            log_big_n: c.big_n,
            log_big_a: c.big_a,
            log_abar: c.abar,
            log_b: c.b.ln_abs,
            log_l: c.l.ln_abs,
            log_v: c.v,
            log_kappa: 2.0 * c.b.ln_abs,
            log_ell,
        });
    }
    let eps_tilde = if feas.feasible { feas.eps_tilde } else { 0.0 };
    Ok(ParamTable {
        eps,
        delta,
        alpha,
        log_a0,
        eps_tilde,
        regime,
        rows,
        warnings,
    })
}

/// One checked relation of the parameter lemma.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundEntry {
    pub q: usize,
    pub name: &'static str,
    pub lhs_log: f64,
    pub rhs_log: f64,
    pub satisfied: bool,
    /// For `≤`: `rhs − lhs`; for equalities: `−|lhs − rhs|`.
    pub slack_log: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub tol_log: f64,
}

impl BoundReport {
    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundEntry> {
        self.entries.iter().filter(|e| !e.satisfied)
    }
}

/// Default log tolerance, applied relative to `max(1, |log value|)`.
pub const BOUND_TOL_LOG: f64 = 1e-9;

struct Checker {
    entries: Vec<BoundEntry>,
    tol: f64,
}

impl Checker {
    fn scaled_tol(&self, a: f64, b: f64) -> f64 {
        self.tol * a.abs().max(b.abs()).max(1.0)
    }

    fn eq(&mut self, q: usize, name: &'static str, lhs: f64, rhs: f64) {
        let slack = -(lhs - rhs).abs();
        let satisfied = slack >= -self.scaled_tol(lhs, rhs);
        self.entries.push(BoundEntry {
            q,
            name,
            lhs_log: lhs,
            rhs_log: rhs,
            satisfied,
            slack_log: slack,
        });
    }

    fn le(&mut self, q: usize, name: &'static str, lhs: f64, rhs: f64) {
        let slack = rhs - lhs;
        let satisfied = slack >= -self.scaled_tol(lhs, rhs);
        self.entries.push(BoundEntry {
            q,
            name,
            lhs_log: lhs,
            rhs_log: rhs,
            satisfied,
            slack_log: slack,
        });
    }
}

/// Checks the closed-form equalities and two-sided bounds of the parameter
/// lemma at every level, plus the summability estimate.
pub fn verify_bounds(table: &ParamTable) -> BoundReport {
    verify_bounds_tol(table, BOUND_TOL_LOG)
}

pub fn verify_bounds_tol(table: &ParamTable, tol: f64) -> BoundReport {
    let eps = table.eps;
    let d = table.delta;
    let r0 = &table.rows[0];
    let la0 = r0.log_a;
    let la_0 = r0.log_big_a;
    let lb0 = r0.log_b;
    let lv0 = r0.log_v;
    let p = (1.0 + d) / (2.0 + d);
    let mut c = Checker {
        entries: Vec::new(),
        tol,
    };
    for (q, row) in table.rows.iter().enumerate() {
        let la = row.log_a;
        c.eq(q, "a_q closed form", la, (1.0 + d).powi(q as i32) * la0);
        c.eq(q, "N_q = a_0/a_q", row.log_big_n, la0 - la);
        c.eq(q, "A_q closed form", row.log_big_a, la_0 + (-eps - p) * la0 + (eps + p) * la);
        c.eq(
            q,
            "v_q closed form",
            row.log_v,
            lv0 + (eps - 1.0 / (2.0 + d)) * la0 + (-eps + 1.0 / (2.0 + d)) * la,
        );
        c.eq(q, "kappa_q = B_q^2", row.log_kappa, 2.0 * row.log_b);
        if q >= 1 {
            let lap = table.rows[q - 1].log_a;
            c.eq(q, "n_q = a_{q-1}^{-delta}/2", row.log_n_rounded, -d * lap - LN_2);
            c.eq(
                q,
                "Abar_q closed form",
                row.log_abar,
                la_0 + (-eps - p) * la0 + (eps + d + p) * lap,
            );
        }
        let x = lb0 - p * la0 + p * la;
        c.le(q, "B_q lower", x - LN_2, row.log_b);
        c.le(q, "B_q upper", row.log_b, x);
        c.le(q, "kappa_q lower", 2.0 * x - 2.0 * LN_2, row.log_kappa);
        c.le(q, "kappa_q upper", row.log_kappa, 2.0 * x);
        if q >= 1 {
            let y = lb0 - p * la0 + la / (2.0 + d);
            c.le(q, "L_q lower", y - 2.0 * LN_2, row.log_l);
            c.le(q, "L_q upper", row.log_l, y - LN_2);
        }
        // Σ_{k ≥ q} a_k^{ε²} ≤ 2 a_q^{ε²}: 64 explicit terms + geometric tail.
        let e2 = eps * eps;
        let mut terms: Vec<f64> = (0..64)
            .map(|k| e2 * (1.0 + d).powi(k) * la)
            .collect();
        let tail_ratio = e2 * d * la0; // ln a_0^{ε²δ} < 0
        let tail = e2 * (1.0 + d).powi(64) * la - ln_one_minus_exp(tail_ratio.min(-1e-300));
        terms.push(tail);
        c.le(q, "summability", log_sum_exp(&terms), LN_2 + e2 * la);
    }
    BoundReport {
        entries: c.entries,
        tol_log: tol,
    }
}

/// Paper-regime table whose `a_0` sits exactly on the summability threshold.
pub fn paper_table(alpha: f64, eps: f64, delta: f64, q_max: usize) -> Result<ParamTable> {
    build_table_with(TableSpec {
        log_a0: max_log_a0_for_summability(eps, delta),
        eps,
        delta,
        alpha: Some(alpha),
        q_max,
        regime: Regime::Paper,
    })
}

/// Desk-regime table with the default conventions.
pub fn desk_table(a0: f64, delta: f64, eps: Option<f64>, q_max: usize) -> Result<ParamTable> {
    if !(a0 > 0.0 && a0 < 1.0) {
        return Err(CoreError::Domain(format!("a0 = {a0} outside (0,1)")));
    }
    build_table_with(TableSpec {
        log_a0: a0.ln(),
        eps: eps.unwrap_or_else(|| desk_default_eps(delta)),
        delta,
        alpha: None,
        q_max,
        regime: Regime::DESK_DEFAULT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn boundary_case_reduces_to_alpha_below_one() {
        let r = check_feasibility(FeasibilityInput {
            alpha: 0.999,
            eps: 0.0,
            delta: 0.0,
        })
        .unwrap();
        assert!(!r.open_condition);
        assert!(!r.feasible);
        for m in r.margins {
            assert!(close(m, (1.0 - 0.999) / 2.0, 1e-12), "{m}");
        }
    }

    #[test]
    fn small_pair_is_feasible() {
        let r = check_feasibility(FeasibilityInput {
            alpha: 0.5,
            eps: 1e-4,
            delta: 1e-3,
        })
        .unwrap();
        // The three Hölder inequalities hold with room to spare ...
        assert!(r.margins.iter().all(|m| *m > 0.1));
        assert!(r.eps_tilde > 0.0);
        // ... but ε ≪ δ in the sense 2δ² + δ³ ≥ ε(1+δ)² + 2ε fails here
        // (2.0e-6 vs 3.0e-4), so the overall verdict is infeasible.
        assert!(close(r.small_eps_margin, 2e-6 + 1e-9 - 1e-4 * 1.001f64.powi(2) - 2e-4, 1e-12));
        assert!(!r.feasible);
        let ok = check_feasibility(FeasibilityInput {
            alpha: 0.5,
            eps: 1e-7,
            delta: 1e-3,
        })
        .unwrap();
        assert!(ok.feasible);
    }

    #[test]
    fn large_eps_violates_small_eps_condition() {
        let r = check_feasibility(FeasibilityInput {
            alpha: 0.5,
            eps: 0.2,
            delta: 0.01,
        })
        .unwrap();
        assert!(r.small_eps_margin < 0.0);
        assert!(!r.feasible);
    }

    #[test]
    fn domain_errors() {
        for (alpha, eps, delta) in [(1.0, 0.1, 0.1), (-0.1, 0.1, 0.1), (0.5, -1.0, 0.1), (0.5, 0.1, -1.0)] {
            assert!(matches!(
                check_feasibility(FeasibilityInput { alpha, eps, delta }),
                Err(CoreError::Domain(_))
            ));
        }
        assert!(matches!(find_eps_delta(1.0), Err(CoreError::Domain(_))));
    }

    #[test]
    fn search_results_pass_the_check() {
        for alpha in [0.0, 0.3, 0.9, 0.99] {
            let (eps, delta) = find_eps_delta(alpha).unwrap();
            assert_eq!(eps, delta * delta * delta);
            let r = check_feasibility(FeasibilityInput { alpha, eps, delta }).unwrap();
            assert!(r.feasible, "alpha {alpha}");
        }
        // The search returns the first passing δ = 2^{-k}: the next larger one fails.
        for alpha in [0.0, 0.5] {
            let (_, delta) = find_eps_delta(alpha).unwrap();
            let d = 2.0 * delta;
            let prev = check_feasibility(FeasibilityInput {
                alpha,
                eps: d * d * d,
                delta: d,
            })
            .unwrap();
            assert!(!prev.feasible);
        }
    }

    #[test]
    fn paper_initial_row() {
        let t = build_table(1e-300, 1e-4, 1e-2, 3);
        // 1e-300 is far from tiny enough for the summability condition.
        assert!(matches!(t, Err(CoreError::Precondition(_))));
        let t = paper_table(0.5, 0.5f64.powi(18), 0.5f64.powi(6), 5).unwrap();
        let r0 = t.rows[0];
        assert_eq!(r0.log_big_a, t.log_a0);
        assert_eq!(r0.log_v, 0.0);
        assert!(close(r0.log_l, 0.25f64.ln(), 1e-15));
        assert!(close(r0.log_b, 0.25f64.ln(), 1e-15));
    }

    #[test]
    fn paper_table_closed_forms() {
        let delta = 0.5f64.powi(6);
        let t = paper_table(0.5, delta.powi(3), delta, 12).unwrap();
        for q in 1..=12 {
            let r = &t.rows[q];
            let lap = t.rows[q - 1].log_a;
            assert!(close(r.log_n, -delta * lap - LN_2, 1e-12));
            assert!(close(r.log_big_n, t.log_a0 - r.log_a, 1e-12));
        }
        let rep = verify_bounds(&t);
        // Equalities, upper bounds and summability all hold.  The lower
        // bounds fail exactly where B_q descends from B_1 ≈ 2L_0 a_0^δ rather
        // than from B_0: B_q, κ_q at odd q and L_q at even q, each short by
        // the constant factor a_0^{δ/(2+δ)} (twice that in log for κ).
        let slack = delta * t.log_a0 / (2.0 + delta);
        for e in rep.failures() {
            let odd = e.q % 2 == 1;
            match e.name {
                "B_q lower" => assert!(odd && close(e.slack_log, slack, 1e-6), "{e:?}"),
                "kappa_q lower" => assert!(odd && close(e.slack_log, 2.0 * slack, 1e-6), "{e:?}"),
                "L_q lower" => assert!(!odd && close(e.slack_log, slack, 1e-6), "{e:?}"),
                _ => panic!("unexpected failure {e:?}"),
            }
        }
        assert_eq!(rep.failures().count(), 18);
    }

    #[test]
    fn monotone_sequences() {
        let delta = 0.5f64.powi(6);
        let t = paper_table(0.5, delta.powi(3), delta, 10).unwrap();
        for w in t.rows.windows(2) {
            assert!(w[1].log_a < w[0].log_a);
            assert!(w[1].log_kappa < w[0].log_kappa);
            // v_q ∝ a_q^{1/(2+δ) − ε} with a positive exponent: pipes slow down.
            assert!(w[1].log_v < w[0].log_v);
        }
    }

    #[test]
    fn perturbed_recursion_is_caught() {
        let delta = 0.5f64.powi(6);
        let mut t = paper_table(0.5, delta.powi(3), delta, 6).unwrap();
        // Recompute a_q with 1.5 δ while leaving the declared δ alone.
        for q in 1..t.rows.len() {
            t.rows[q].log_a = (1.0 + 1.5 * delta) * t.rows[q - 1].log_a;
        }
        assert!(!verify_bounds(&t).all_satisfied());
    }

    #[test]
    fn desk_table_rounds_n() {
        let t = desk_table(0.1, 0.3, None, 3).unwrap();
        for q in 1..=3 {
            let n = t.rows[q].log_n_rounded.exp();
            assert!((n - n.round()).abs() < 1e-9);
            assert_eq!(n.round() as u64 % 2, 0);
            assert!(n.round() >= 10.0);
        }
        assert!(!t.warnings.is_empty());
        let l0 = t.level(0);
        assert!(close(l0.l, 0.8, 1e-14) && close(l0.b, 0.7, 1e-14));
        // the block relation L_q = n A_{q+1} + n B_{q+1} + 2 A_q
        for q in 0..3 {
            let c = t.level(q);
            let nx = t.level(q + 1);
            assert!(close(c.l, nx.n * (nx.big_a + nx.b) + 2.0 * c.big_a, 1e-12));
        }
    }

    #[test]
    fn desk_degeneracy_is_reported() {
        match desk_table(0.3, 0.3, None, 2) {
            Err(CoreError::Degenerate { level, .. }) => assert_eq!(level, 1),
            other => panic!("{other:?}"),
        }
    }
}
