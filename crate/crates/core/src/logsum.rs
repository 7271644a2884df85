//! Overflow-safe streaming sums of signed terms given in log magnitude.

/// A running sum `Σ s_i · exp(l_i)` stored as a sign and a log magnitude.
///
/// Zero is `sign == 0`, `log_magnitude == -inf`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SignedLogSum {
    sign: i8,
    log_magnitude: f64,
}

impl Default for SignedLogSum {
    fn default() -> Self {
        Self::zero()
    }
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a − e^b)` for `a ≥ b`.
#[inline]
fn log_sub_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b);
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

impl SignedLogSum {
    pub const fn zero() -> Self {
        Self { sign: 0, log_magnitude: f64::NEG_INFINITY }
    }

    /// A single term `sign · exp(log_magnitude)`.
    pub fn term(sign: i8, log_magnitude: f64) -> Self {
        if sign == 0 || log_magnitude == f64::NEG_INFINITY {
            Self::zero()
        } else {
            Self { sign: sign.signum(), log_magnitude }
        }
    }

    pub fn from_value(v: f64) -> Self {
        Self::term(sign_of(v), v.abs().ln())
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn log_magnitude(&self) -> f64 {
        self.log_magnitude
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Adds `sign · exp(log_magnitude)`.
    pub fn add_term(&mut self, sign: i8, log_magnitude: f64) {
        let other = Self::term(sign, log_magnitude);
        *self = *self + other;
    }

    /// Adds `value · exp(log_scale)`, the common "K times weight" shape.
    #[inline]
    pub fn add_scaled(&mut self, value: f64, log_scale: f64) {
        if value != 0.0 {
            self.add_term(sign_of(value), value.abs().ln() + log_scale);
        }
    }

    /// Multiplies by a real constant.
    pub fn scale(self, c: f64) -> Self {
        if c == 0.0 || self.is_zero() {
            return Self::zero();
        }
        Self::term(self.sign * sign_of(c), self.log_magnitude + c.abs().ln())
    }

    pub fn value(&self) -> f64 {
        self.sign as f64 * self.log_magnitude.exp()
    }

    /// `self / other` as a plain real, computed in log space.
    pub fn ratio(&self, other: &Self) -> f64 {
        if self.is_zero() {
            return if other.is_zero() { f64::NAN } else { 0.0 };
        }
        (self.sign * other.sign) as f64 * (self.log_magnitude - other.log_magnitude).exp()
    }
}

impl std::ops::Add for SignedLogSum {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        if rhs.is_zero() {
            return self;
        }
        if self.is_zero() {
            return rhs;
        }
        if self.sign == rhs.sign {
            return Self::term(self.sign, log_add_exp(self.log_magnitude, rhs.log_magnitude));
        }
        let (big, small) =
            if self.log_magnitude >= rhs.log_magnitude { (self, rhs) } else { (rhs, self) };
        Self::term(big.sign, log_sub_exp(big.log_magnitude, small.log_magnitude))
    }
}

#[inline]
fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}
