//! Dense univariate polynomials over `Q`, coefficients stored low to high.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rational::{fast_gcd, format_q, q_new, Q};

/// Integer numerators over one common positive denominator, kept reduced.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    num: Vec<BigInt>,
    den: BigInt,
}

impl Default for Poly {
    fn default() -> Self {
        Self::zero()
    }
}

fn pow_big(b: &BigInt, e: usize) -> BigInt {
    num_traits::pow(b.clone(), e)
}

impl Poly {
    pub fn zero() -> Self {
        Poly { num: Vec::new(), den: BigInt::one() }
    }

    pub fn constant(v: Q) -> Self {
        Self::from_coeffs(vec![v])
    }

    /// The monomial `t`.
    pub fn t() -> Self {
        Poly { num: vec![BigInt::zero(), BigInt::one()], den: BigInt::one() }
    }

    fn normalized(mut num: Vec<BigInt>, mut den: BigInt) -> Self {
        while num.last().is_some_and(|x| x.is_zero()) {
            num.pop();
        }
        if num.is_empty() {
            return Self::zero();
        }
        if den.is_negative() {
            den = -den;
            for a in &mut num {
                *a = -&*a;
            }
        }
        if !den.is_one() {
            let mut g = den.clone();
            for a in &num {
                if g.is_one() {
                    break;
                }
                if !a.is_zero() {
                    g = fast_gcd(&g, a);
                }
            }
            if !g.is_one() {
                let tz = g.trailing_zeros().unwrap_or(0);
                if g.bits() == tz + 1 {
                    for a in &mut num {
                        *a >>= tz as usize;
                    }
                    den >>= tz as usize;
                } else {
                    for a in &mut num {
                        *a /= &g;
                    }
                    den /= &g;
                }
            }
        }
        Poly { num, den }
    }

    pub fn from_coeffs(c: Vec<Q>) -> Self {
        let mut l = BigInt::one();
        for a in &c {
            if !a.is_zero() && !a.denom().is_one() {
                l = l.lcm(a.denom());
            }
        }
        let num = c.iter().map(|a| a.numer() * (&l / a.denom())).collect();
        Self::normalized(num, l)
    }

    pub fn coeffs(&self) -> Vec<Q> {
        self.num.iter().map(|a| q_new(a.clone(), self.den.clone())).collect()
    }

    pub fn coeff(&self, i: usize) -> Q {
        self.num.get(i).map(|a| q_new(a.clone(), self.den.clone())).unwrap_or_else(Q::zero)
    }

    /// Integer numerators; the coefficients are these over [`Poly::denominator`].
    pub fn numerators(&self) -> &[BigInt] {
        &self.num
    }

    pub fn denominator(&self) -> &BigInt {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.num.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<Q> {
        self.degree().map(|d| self.coeff(d))
    }

    pub fn is_constant(&self) -> bool {
        self.num.len() <= 1
    }

    pub fn constant_term(&self) -> Q {
        self.coeff(0)
    }

    pub fn eval(&self, x: &Q) -> Q {
        let Some(d) = self.degree() else {
            return Q::zero();
        };
        let (n, dd) = (x.numer(), x.denom());
        if dd.is_one() {
            let mut acc = self.num[d].clone();
            for a in self.num[..d].iter().rev() {
                acc = acc * n + a;
            }
            return q_new(acc, self.den.clone());
        }
        let mut acc = self.num[d].clone();
        let mut dp = BigInt::one();
        for a in self.num[..d].iter().rev() {
            dp *= dd;
            acc = acc * n + a * &dp;
        }
        q_new(acc, &self.den * dp)
    }

    /// `p(x)` as an unreduced fraction `(numerator, positive denominator)`.
    pub fn eval_frac(&self, x: &Q) -> (BigInt, BigInt) {
        let Some(d) = self.degree() else {
            return (BigInt::zero(), BigInt::one());
        };
        let (n, dd) = (x.numer(), x.denom());
        let mut acc = self.num[d].clone();
        let mut dp = BigInt::one();
        for a in self.num[..d].iter().rev() {
            dp *= dd;
            acc = acc * n + a * &dp;
        }
        (acc, &self.den * dp)
    }

    /// Leading coefficients agree (compared without reducing).
    pub fn same_leading(&self, other: &Poly) -> bool {
        match (self.num.last(), other.num.last()) {
            (None, None) => true,
            (Some(a), Some(b)) => a * &other.den == b * &self.den,
            _ => false,
        }
    }

    /// Constant terms agree with `(n, d)`, `d > 0`.
    pub fn constant_is(&self, n: &BigInt, d: &BigInt) -> bool {
        match self.num.first() {
            None => n.is_zero(),
            Some(a) => a * d == n * &self.den,
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..self.num.len()).rev() {
            acc = acc * x + crate::rational::to_f64(&self.coeff(i));
        }
        acc
    }

    pub fn scale(&self, k: &Q) -> Self {
        if k.is_zero() || self.is_zero() {
            return Self::zero();
        }
        Self::normalized(self.num.iter().map(|a| a * k.numer()).collect(), &self.den * k.denom())
    }

    pub fn derivative(&self) -> Self {
        Self::normalized(
            self.num.iter().enumerate().skip(1).map(|(i, a)| a * BigInt::from(i)).collect(),
            self.den.clone(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn integral(&self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut l = BigInt::one();
        for i in 2..=self.num.len() {
            l = l.lcm(&BigInt::from(i));
        }
        let mut out = Vec::with_capacity(self.num.len() + 1);
        out.push(BigInt::zero());
        for (i, a) in self.num.iter().enumerate() {
            out.push(a * (&l / BigInt::from(i + 1)));
        }
        Self::normalized(out, &self.den * l)
    }

    /// `p(t + h)`.
    pub fn taylor_shift(&self, h: &Q) -> Self {
        if h.is_zero() || self.num.len() <= 1 {
            return self.clone();
        }
        let (n, d) = (h.numer(), h.denom());
        let deg = self.num.len() - 1;
        // r(y) = sum num_i d^(deg-i) y^i, so that p(t + h) = r(d t + n) / (den d^deg).
        let mut c: Vec<BigInt> = if d.is_one() {
            self.num.clone()
        } else {
            let mut out = vec![BigInt::zero(); deg + 1];
            let mut dp = BigInt::one();
            for i in (0..=deg).rev() {
                out[i] = &self.num[i] * &dp;
                if i > 0 {
                    dp *= d;
                }
            }
            out
        };
        for i in 0..=deg {
            for j in (i..deg).rev() {
                let t = &c[j + 1] * n;
                c[j] += t;
            }
        }
        if d.is_one() {
            return Self::normalized(c, self.den.clone());
        }
        let mut dp = BigInt::one();
        for a in c.iter_mut() {
            *a *= &dp;
            dp *= d;
        }
        Self::normalized(c, &self.den * pow_big(d, deg))
    }

    /// `p(k t)`.
    pub fn dilate(&self, k: &Q) -> Self {
        let Some(deg) = self.degree() else {
            return Self::zero();
        };
        let (n, d) = (k.numer(), k.denom());
        let mut out = self.num.clone();
        let mut np = BigInt::one();
        for a in out.iter_mut() {
            *a *= &np;
            np *= n;
        }
        if !d.is_one() {
            let mut dp = BigInt::one();
            for a in out.iter_mut().rev() {
                *a *= &dp;
                dp *= d;
            }
            return Self::normalized(out, &self.den * pow_big(d, deg));
        }
        Self::normalized(out, self.den.clone())
    }

    /// Gcd-free part via the Euclidean algorithm on `p` and `p'`.
    pub fn squarefree(&self) -> Self {
        if self.num.len() <= 2 {
            return self.clone();
        }
        let g = gcd(self, &self.derivative());
        if g.is_constant() {
            self.clone()
        } else {
            div_rem(self, &g).0
        }
    }

    pub fn max_abs_coeff(&self) -> Q {
        let m = self.num.iter().map(|a| a.abs()).max().unwrap_or_else(BigInt::zero);
        q_new(m, self.den.clone())
    }
}

/// Polynomial long division: `(quotient, remainder)`.
pub fn div_rem(a: &Poly, b: &Poly) -> (Poly, Poly) {
    assert!(!b.is_zero(), "division by zero polynomial");
    let bc = b.coeffs();
    let db = bc.len() - 1;
    let lb = bc[db].clone();
    let mut r = a.coeffs();
    if r.len() <= db {
        return (Poly::zero(), a.clone());
    }
    let mut qv = vec![Q::zero(); r.len() - db];
    for i in (0..qv.len()).rev() {
        let f = &r[i + db] / &lb;
        if !f.is_zero() {
            for (j, bj) in bc.iter().enumerate() {
                let t = &f * bj;
                r[i + j] -= t;
            }
        }
        qv[i] = f;
    }
    r.truncate(db);
    (Poly::from_coeffs(qv), Poly::from_coeffs(r))
}

pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    let mut x = a.clone();
    let mut y = b.clone();
    while !y.is_zero() {
        let r = div_rem(&x, &y).1;
        x = y;
        // Keep coefficient growth in check by normalizing to a monic remainder.
        y = match r.leading() {
            Some(l) => r.scale(&l.recip()),
            None => r,
        };
    }
    match x.leading() {
        Some(l) => x.scale(&l.recip()),
        None => x,
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let terms: Vec<String> = self
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_zero())
            .map(|(i, a)| match i {
                0 => format_q(a),
                1 => format!("{}*t", format_q(a)),
                _ => format!("{}*t^{i}", format_q(a)),
            })
            .collect();
        f.write_str(&terms.join(" + "))
    }
}

impl Add<&Poly> for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let l = self.den.lcm(&rhs.den);
        let (ka, kb) = (&l / &self.den, &l / &rhs.den);
        let n = self.num.len().max(rhs.num.len());
        let out = (0..n)
            .map(|i| {
                let x = self.num.get(i).map(|a| a * &ka).unwrap_or_default();
                let y = rhs.num.get(i).map(|b| b * &kb).unwrap_or_default();
                x + y
            })
            .collect();
        Poly::normalized(out, l)
    }
}

impl Sub<&Poly> for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { num: self.num.iter().map(|a| -a).collect(), den: self.den.clone() }
    }
}

impl Mul<&Poly> for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigInt::zero(); self.num.len() + rhs.num.len() - 1];
        for (i, a) in self.num.iter().enumerate() {
            for (j, b) in rhs.num.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::normalized(out, &self.den * &rhs.den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn p(v: &[i64]) -> Poly {
        Poly::from_coeffs(v.iter().map(|&x| qi(x)).collect())
    }

    #[test]
    fn taylor_shift_matches_direct_evaluation() {
        let f = p(&[1, -3, 0, 2]);
        let h = q(5, 7);
        let g = f.taylor_shift(&h);
        for x in [q(0, 1), q(1, 3), q(-2, 1)] {
            assert_eq!(g.eval(&x), f.eval(&(&x + &h)));
        }
    }

    #[test]
    fn integral_then_derivative_is_identity() {
        let f = Poly::from_coeffs(vec![q(1, 2), q(-3, 4), q(7, 5)]);
        assert_eq!(f.integral().derivative(), f);
    }

    #[test]
    fn division_and_squarefree_part() {
        // (t-1)^2 (t+2)
        let f = &(&p(&[-1, 1]) * &p(&[-1, 1])) * &p(&[2, 1]);
        let (qq, r) = div_rem(&f, &p(&[-1, 1]));
        assert!(r.is_zero());
        assert_eq!(qq, &p(&[-1, 1]) * &p(&[2, 1]));
        let s = f.squarefree();
        assert_eq!(s.degree(), Some(2));
        assert!(s.eval(&qi(1)).is_zero() && s.eval(&qi(-2)).is_zero());
    }

    #[test]
    fn dilate_rescales_argument() {
        let f = p(&[1, 2, 3]);
        let g = f.dilate(&q(1, 2));
        assert_eq!(g.eval(&qi(4)), f.eval(&qi(2)));
    }
}
