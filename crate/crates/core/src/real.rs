//! High-precision real numbers for log-domain weight computations.
//!
//! `Real` wraps an `astro_float::BigFloat` at a fixed working precision of
//! 256 bits (about 77 significant decimal digits). Weight sequences such as
//! `log M_n = 2^n` span tens of orders of magnitude over a horizon of 64, so
//! differences like `P(n) - p log M_n` cannot be formed in `f64`.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_bigint::{BigInt, Sign as BigSign};
use num_traits::{Signed, Zero};
use serde::{Serialize, Serializer};

use crate::rational::Q;

/// Working precision in bits.
pub const PRECISION: usize = 256;

/// Relative tolerance for comparisons of log-domain quantities.
pub const COMPARE_REL_TOL: f64 = 1e-30;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constants cache"));
}

fn with_consts<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

#[derive(Clone)]
pub struct Real(BigFloat);

impl Real {
    pub fn zero() -> Self {
        Real(BigFloat::from_u8(0, PRECISION))
    }

    pub fn one() -> Self {
        Real(BigFloat::from_u8(1, PRECISION))
    }

    pub fn from_i64(v: i64) -> Self {
        Real(BigFloat::from_i64(v, PRECISION))
    }

    pub fn from_f64(v: f64) -> Self {
        Real(BigFloat::from_f64(v, PRECISION))
    }

    pub fn from_bigint(v: &BigInt) -> Self {
        if v.is_zero() {
            return Self::zero();
        }
        let (sign, digits) = v.to_u64_digits();
        let sign = if sign == BigSign::Minus { Sign::Neg } else { Sign::Pos };
        let bits = 64 * digits.len();
        let mut f = BigFloat::from_words(&digits, sign, bits as i32);
        if f.precision().unwrap_or(0) != PRECISION {
            f.set_precision(PRECISION, RM).expect("set precision");
        }
        Real(f)
    }

    pub fn from_rational(q: &Q) -> Self {
        Self::from_bigint(q.numer()) / Self::from_bigint(q.denom())
    }

    /// Parse a decimal literal such as `1.5e3`.
    pub fn parse_decimal(s: &str) -> Option<Self> {
        let f = with_consts(|cc| BigFloat::parse(s.trim(), astro_float::Radix::Dec, PRECISION, RM, cc));
        if f.is_nan() {
            None
        } else {
            Some(Real(f))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative() && !self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive() && !self.0.is_zero()
    }

    pub fn abs(&self) -> Self {
        Real(self.0.abs())
    }

    /// `ln 2`, computed once.
    pub fn ln2() -> Self {
        static LN2: std::sync::OnceLock<Real> = std::sync::OnceLock::new();
        LN2.get_or_init(|| Real::from_i64(2).ln()).clone()
    }

    pub fn ln(&self) -> Self {
        with_consts(|cc| Real(self.0.ln(PRECISION, RM, cc)))
    }

    pub fn exp(&self) -> Self {
        with_consts(|cc| Real(self.0.exp(PRECISION, RM, cc)))
    }

    /// `self^e` for `self > 0`, computed as `exp(e ln self)`.
    pub fn powr(&self, e: &Real) -> Self {
        if self.is_zero() {
            return if e.is_zero() { Self::one() } else { Self::zero() };
        }
        (e * &self.ln()).exp()
    }

    pub fn powi(&self, n: i64) -> Self {
        if n >= 0 {
            Real(self.0.powi(n as usize, PRECISION, RM))
        } else {
            Self::one() / Real(self.0.powi(n.unsigned_abs() as usize, PRECISION, RM))
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Nearest `f64`; saturates to `±inf` or `0` outside the `f64` range.
    pub fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        match self.0.as_raw_parts() {
            Some((m, _, sign, e, _)) => {
                let top = *m.last().unwrap_or(&0);
                if top == 0 {
                    return 0.0;
                }
                let v = ldexp(top as f64, e as i64 - 64);
                if sign == Sign::Neg {
                    -v
                } else {
                    v
                }
            }
            None => 0.0,
        }
    }

    /// Decimal rendering with `digits` significant digits.
    pub fn to_decimal(&self, digits: usize) -> String {
        if self.0.is_nan() {
            return "NaN".into();
        }
        if self.0.is_inf_pos() {
            return "inf".into();
        }
        if self.0.is_inf_neg() {
            return "-inf".into();
        }
        let bits = ((digits as f64) * std::f64::consts::LOG2_10).ceil() as usize + 8;
        let mut f = self.0.clone();
        let bits = bits.div_ceil(64) * 64;
        if bits < PRECISION {
            f.set_precision(bits, RM).expect("set precision");
        }
        with_consts(|cc| f.format(astro_float::Radix::Dec, RM, cc)).unwrap_or_else(|_| "NaN".into())
    }

    /// `true` when `|self - other| <= COMPARE_REL_TOL * max(|self|, |other|, 1)`.
    pub fn approx_eq(&self, other: &Real) -> bool {
        let diff = (self - other).abs();
        let scale = self.abs().max(other.abs()).max(Real::one());
        diff <= scale * Real::from_f64(COMPARE_REL_TOL)
    }
}

/// `x * 2^e` without intermediate overflow.
pub(crate) fn ldexp(x: f64, e: i64) -> f64 {
    let mut x = x;
    let mut e = e;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Real({})", self.to_decimal(24))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal(24))
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_decimal(30))
    }
}

macro_rules! real_binop {
    ($trait:ident, $method:ident, $op:ident) => {
        impl $trait<&Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                Real(self.0.$op(&rhs.0, PRECISION, RM))
            }
        }
        impl $trait<Real> for Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Real> for Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                (&self).$method(rhs)
            }
        }
        impl $trait<Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                self.$method(&rhs)
            }
        }
    };
}

real_binop!(Add, add, add);
real_binop!(Sub, sub, sub);
real_binop!(Mul, mul, mul);
real_binop!(Div, div, div);

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(self.0.neg())
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(self.0.clone().neg())
    }
}

impl From<&Q> for Real {
    fn from(q: &Q) -> Self {
        Real::from_rational(q)
    }
}

/// Natural log of a positive rational as `f64`, robust for very large or
/// very small magnitudes.
pub fn ln_rational(q: &Q) -> f64 {
    debug_assert!(q.is_positive());
    ln_bigint(q.numer()) - ln_bigint(q.denom())
}

fn ln_bigint(v: &BigInt) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        num_traits::ToPrimitive::to_f64(&v.abs()).unwrap_or(f64::INFINITY).ln()
    } else {
        let shift = bits - 64;
        let top: BigInt = v.abs() >> shift;
        num_traits::ToPrimitive::to_f64(&top).unwrap().ln() + (shift as f64) * std::f64::consts::LN_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    #[test]
    fn rational_conversion_round_trips_through_f64() {
        let x = Real::from_rational(&q(-7, 3));
        assert!((x.to_f64() + 7.0 / 3.0).abs() < 1e-15);
        let big = Real::from_bigint(&(BigInt::from(1) << 900));
        assert_eq!(big.to_f64(), 2f64.powi(900));
    }

    #[test]
    fn ln_exp_are_inverse_at_high_precision() {
        let x = Real::from_i64(12345);
        assert!(x.ln().exp().approx_eq(&x));
        let two = Real::from_i64(2);
        let s = two.ln().to_decimal(40);
        assert!(s.starts_with("6.93147180559945309417232121458176568075"), "{s}");
    }

    #[test]
    fn tiny_exponentials_underflow_to_zero() {
        assert!(Real::from_f64(-1e12).exp().is_zero());
        assert_eq!(Real::from_f64(-1e12).exp().to_f64(), 0.0);
    }

    #[test]
    fn ln_rational_handles_huge_magnitudes() {
        let v = Q::from_integer(BigInt::from(1) << 5000usize);
        let want = 5000.0 * std::f64::consts::LN_2;
        assert!((ln_rational(&v) - want).abs() < 1e-9);
        assert!((ln_rational(&q(1, 8)) + 3.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }
}
