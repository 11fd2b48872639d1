//! Arbitrary-precision rationals and a few exact helpers on top of `num`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};

pub type Q = BigRational;

/// Shorthand constructor `n/d`.
pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parse `a/b`, an integer, or a finite decimal literal (`0.25`, `1e-3`)
/// into an exact rational.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let v = if scale >= 0 {
        Q::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(num, num_traits::pow(ten, scale.unsigned_abs() as usize))
    };
    Some(v)
}

/// Canonical `num/den` string (integers print without a denominator).
pub fn format_q(v: &Q) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Exact `k`-th root of a nonnegative rational, if it is rational.
pub fn exact_root(v: &Q, k: u32) -> Option<Q> {
    if v.is_negative() {
        return None;
    }
    if k == 1 {
        return Some(v.clone());
    }
    let n = v.numer().nth_root(k);
    let d = v.denom().nth_root(k);
    if num_traits::pow(n.clone(), k as usize) == *v.numer() && num_traits::pow(d.clone(), k as usize) == *v.denom() {
        Some(Q::new(n, d))
    } else {
        None
    }
}

/// `v^(num/den)` for `v >= 0` when the result is rational.
pub fn exact_pow(v: &Q, num: u32, den: u32) -> Option<Q> {
    let root = exact_root(v, den)?;
    Some(num_traits::pow(root, num as usize))
}

/// `v^e` for an integer exponent.
pub fn pow_i(v: &Q, e: i32) -> Q {
    if e >= 0 {
        num_traits::pow(v.clone(), e as usize)
    } else {
        num_traits::pow(v.recip(), e.unsigned_abs() as usize)
    }
}

/// Binary exponent `e` with `2^e <= |v| < 2^(e+1)`; `None` for zero.
pub fn log2_floor(v: &Q) -> Option<i64> {
    if v.is_zero() {
        return None;
    }
    let n = v.numer().abs();
    let d = v.denom();
    let mut e = n.bits() as i64 - d.bits() as i64;
    // Adjust for the mantissa comparison.
    let two = BigInt::from(2);
    let ge = |e: i64| -> bool {
        if e >= 0 {
            n >= d * num_traits::pow(two.clone(), e as usize)
        } else {
            &n * num_traits::pow(two.clone(), (-e) as usize) >= *d
        }
    };
    while !ge(e) {
        e -= 1;
    }
    while ge(e + 1) {
        e += 1;
    }
    Some(e)
}

/// `v * 2^(-e)` converted to `f64`; used after factoring out a binary scale so
/// that huge coefficients survive the conversion.
pub fn to_f64_scaled(v: &Q, e: i64) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    let scaled = if e >= 0 {
        Q::new(v.numer().clone(), v.denom() << e as usize)
    } else {
        Q::new(v.numer() << (-e) as usize, v.denom().clone())
    };
    ratio_to_f64(&scaled)
}

/// `gcd(a, b)`, stripping the common power of two first and reducing the
/// larger operand modulo the smaller so that the binary gcd runs on small
/// inputs.
pub fn fast_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    if a.is_zero() {
        return b.abs();
    }
    if b.is_zero() {
        return a.abs();
    }
    let ta = a.trailing_zeros().unwrap_or(0);
    let tb = b.trailing_zeros().unwrap_or(0);
    let oa = a.abs() >> ta as usize;
    let ob = b.abs() >> tb as usize;
    let (big, small) = if oa.bits() >= ob.bits() { (oa, ob) } else { (ob, oa) };
    let odd = if small.is_one() { small } else { (big % &small).gcd(&small) };
    odd << ta.min(tb) as usize
}

/// `a - b` reduced with [`fast_gcd`].
pub fn q_sub(a: &Q, b: &Q) -> Q {
    if a.denom() == b.denom() {
        return q_new(a.numer() - b.numer(), a.denom().clone());
    }
    q_new(a.numer() * b.denom() - b.numer() * a.denom(), a.denom() * b.denom())
}

/// Order of two rationals by cross-multiplication (denominators are positive).
pub fn q_cmp(a: &Q, b: &Q) -> std::cmp::Ordering {
    if a.denom() == b.denom() {
        return a.numer().cmp(b.numer());
    }
    (a.numer() * b.denom()).cmp(&(b.numer() * a.denom()))
}

/// Reduced `n / d` using [`fast_gcd`].
pub fn q_new(n: BigInt, d: BigInt) -> Q {
    assert!(!d.is_zero(), "zero denominator");
    if n.is_zero() {
        return Q::zero();
    }
    let g = fast_gcd(&n, &d);
    let (mut n, mut d) = if g.is_one() { (n, d) } else { (n / &g, d / &g) };
    if d.is_negative() {
        n = -n;
        d = -d;
    }
    Q::new_raw(n, d)
}

/// `n / (d 2^e)` as `f64` without reducing the fraction.
pub fn frac_to_f64_scaled(n: &BigInt, d: &BigInt, e: i64) -> f64 {
    if n.is_zero() {
        return 0.0;
    }
    let ns = (n.bits() as i64 - 64).max(0);
    let ds = (d.bits() as i64 - 64).max(0);
    let nt = (n >> ns as usize).to_f64().unwrap();
    let dt = (d >> ds as usize).to_f64().unwrap();
    crate::real::ldexp(nt / dt, ns - ds - e)
}

/// Robust conversion for rationals whose numerator and denominator may each
/// exceed the `f64` range.
pub fn ratio_to_f64(v: &Q) -> f64 {
    let n = v.numer();
    let d = v.denom();
    let nb = n.bits() as i64;
    let db = d.bits() as i64;
    if nb < 1000 && db < 1000 {
        return n.to_f64().unwrap() / d.to_f64().unwrap();
    }
    let ns = (nb - 64).max(0);
    let ds = (db - 64).max(0);
    let nt = (n >> ns as usize).to_f64().unwrap();
    let dt = (d >> ds as usize).to_f64().unwrap();
    crate::real::ldexp(nt / dt, ns - ds)
}

pub fn to_f64(v: &Q) -> f64 {
    ratio_to_f64(v)
}

pub(crate) mod serde_q {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_q(v))
    }

    #[allow(dead_code)]
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid rational `{s}`")))
    }
}

pub(crate) mod serde_q_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[Q], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&format_q(x))?;
        }
        seq.end()
    }

    #[allow(dead_code)]
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_q(s).ok_or_else(|| serde::de::Error::custom(format!("invalid rational `{s}`"))))
            .collect()
    }
}

pub(crate) mod serde_q_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_some(&format_q(x)),
            None => s.serialize_none(),
        }
    }
}

/// Exponent `p` in (0, 1] split as a reduced fraction `num/den`.
pub fn exponent_parts(p: &Q) -> Option<(u32, u32)> {
    let n = p.numer().to_u32()?;
    let d = p.denom().to_u32()?;
    Some((n, d))
}

pub fn is_unit_interval_open_closed(p: &Q) -> bool {
    p.is_positive() && *p <= Q::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_q("3/4"), Some(q(3, 4)));
        assert_eq!(parse_q("-0.25"), Some(q(-1, 4)));
        assert_eq!(parse_q("1e-3"), Some(q(1, 1000)));
        assert_eq!(parse_q("2.5E2"), Some(qi(250)));
        assert_eq!(parse_q("7"), Some(qi(7)));
        assert_eq!(parse_q("1/0"), None);
        assert_eq!(parse_q("abc"), None);
        assert_eq!(parse_q("."), None);
    }

    #[test]
    fn exact_roots_only_when_representable() {
        assert_eq!(exact_root(&q(9, 16), 2), Some(q(3, 4)));
        assert_eq!(exact_root(&q(2, 1), 2), None);
        assert_eq!(exact_pow(&q(1, 4), 3, 2), Some(q(1, 8)));
        assert_eq!(exact_root(&q(-1, 1), 3), None);
    }

    #[test]
    fn log2_floor_brackets_value() {
        assert_eq!(log2_floor(&q(1, 1)), Some(0));
        assert_eq!(log2_floor(&q(3, 1)), Some(1));
        assert_eq!(log2_floor(&q(1, 3)), Some(-2));
        assert_eq!(log2_floor(&q(-1, 4)), Some(-2));
        assert_eq!(log2_floor(&Q::zero()), None);
    }

    #[test]
    fn scaled_conversion_survives_large_values() {
        let big = Q::from_integer(BigInt::from(3) << 3000usize);
        let e = log2_floor(&big).unwrap();
        assert!((to_f64_scaled(&big, e) - 1.5).abs() < 1e-15);
        assert!((ratio_to_f64(&Q::new(BigInt::from(1) << 1500usize, BigInt::from(1) << 1499usize)) - 2.0).abs() < 1e-15);
    }
}
