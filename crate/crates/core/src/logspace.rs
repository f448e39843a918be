//! Sign-tracked natural-log arithmetic for quantities that under- or
//! overflow `f64` (the pipe scales decay doubly exponentially).

#[allow(unused_imports)]
use num_traits::Float;

/// A real number stored as `sign · exp(ln_abs)`.
///
/// `sign` is `-1`, `0` or `1`; for `sign == 0` the magnitude is ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    pub sign: i8,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };

    /// A positive number given by its natural log.
    pub fn from_ln(ln_abs: f64) -> Self {
        SignedLog { sign: 1, ln_abs }
    }

    pub fn from_f64(x: f64) -> Self {
        if x > 0.0 {
            SignedLog::from_ln(x.ln())
        } else if x < 0.0 {
            SignedLog {
                sign: -1,
                ln_abs: (-x).ln(),
            }
        } else {
            SignedLog::ZERO
        }
    }

    /// Linear value; may under- or overflow.
    pub fn to_f64(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.ln_abs.exp(),
        }
    }

    pub fn is_positive(self) -> bool {
        self.sign > 0
    }

    pub fn neg(self) -> Self {
        SignedLog {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }

    /// Multiply by a positive factor given in log form.
    pub fn scale_ln(self, ln_factor: f64) -> Self {
        if self.sign == 0 {
            self
        } else {
            SignedLog {
                sign: self.sign,
                ln_abs: self.ln_abs + ln_factor,
            }
        }
    }

    pub fn add(self, other: SignedLog) -> SignedLog {
        if self.sign == 0 {
            return other;
        }
        if other.sign == 0 {
            return self;
        }
        let (big, small) = if self.ln_abs >= other.ln_abs {
            (self, other)
        } else {
            (other, self)
        };
        let d = small.ln_abs - big.ln_abs; // <= 0
        if big.sign == small.sign {
            SignedLog {
                sign: big.sign,
                ln_abs: big.ln_abs + d.exp().ln_1p(),
            }
        } else if d == 0.0 {
            SignedLog::ZERO
        } else {
            // |big| - |small| = |big| (1 - e^d), computed with expm1 for accuracy.
            SignedLog {
                sign: big.sign,
                ln_abs: big.ln_abs + ln_one_minus_exp(d),
            }
        }
    }

    pub fn sub(self, other: SignedLog) -> SignedLog {
        self.add(other.neg())
    }
}

/// `ln(1 - e^d)` for `d < 0`, accurate both near 0 and for very negative d.
pub fn ln_one_minus_exp(d: f64) -> f64 {
    debug_assert!(d < 0.0);
    if d > -core::f64::consts::LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// `ln(Σ e^{x_i})` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_and_sub_match_linear_arithmetic() {
        let cases = [(3.0, 2.0), (2.0, 3.0), (-1.5, 0.25), (1e-3, -1e-3), (0.0, 4.0)];
        for (a, b) in cases {
            let s = SignedLog::from_f64(a).add(SignedLog::from_f64(b)).to_f64();
            assert!((s - (a + b)).abs() < 1e-14, "{a}+{b} -> {s}");
            let d = SignedLog::from_f64(a).sub(SignedLog::from_f64(b)).to_f64();
            assert!((d - (a - b)).abs() < 1e-14, "{a}-{b} -> {d}");
        }
    }

    #[test]
    fn subtraction_survives_underflow() {
        // e^{-2000} - e^{-2001} = e^{-2000}(1 - e^{-1})
        let x = SignedLog::from_ln(-2000.0).sub(SignedLog::from_ln(-2001.0));
        assert_eq!(x.sign, 1);
        let expected = -2000.0 + (1.0 - (-1.0f64).exp()).ln();
        assert!((x.ln_abs - expected).abs() < 1e-12);
    }

    #[test]
    fn ln_one_minus_exp_branches_agree() {
        for d in [-1e-12, -1e-3, -0.5, -0.7, -1.0, -30.0] {
            let direct = (1.0 - d.exp()).ln();
            let v = ln_one_minus_exp(d);
            assert!((v - direct).abs() <= 1e-9 * direct.abs().max(1.0) || d > -1e-6);
        }
        assert!((ln_one_minus_exp(-1e-12) - (1e-12f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_of_equal_terms() {
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }
}
