//! Real-root isolation on `[0, 1]` through Bernstein coefficients.

use num_traits::{One, Signed, Zero};

use crate::poly::Poly;
use crate::rational::Q;

/// Power-basis coefficients on `[0,1]` to Bernstein coefficients.
pub(crate) fn bernstein(c: &[Q]) -> Vec<Q> {
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    let d = n - 1;
    let binom = binomials(d);
    (0..=d)
        .map(|i| {
            let mut s = Q::zero();
            for k in 0..=i {
                if c[k].is_zero() {
                    continue;
                }
                s += &c[k] * Q::new(binom[i][k].clone().into(), binom[d][k].clone().into());
            }
            s
        })
        .collect()
}

/// `f64` Bernstein coefficients with a running error bound per coefficient.
pub(crate) fn bernstein_f64(c: &[f64]) -> Vec<(f64, f64)> {
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    let d = n - 1;
    let mut binom = vec![vec![0f64; d + 1]; d + 1];
    for i in 0..=d {
        binom[i][0] = 1.0;
        for k in 1..=i {
            binom[i][k] = binom[i - 1][k - 1] + if k < i { binom[i - 1][k] } else { 0.0 };
        }
    }
    (0..=d)
        .map(|i| {
            let mut s = 0.0;
            let mut mag = 0.0;
            for k in 0..=i {
                let t = c[k] * binom[i][k] / binom[d][k];
                s += t;
                mag += t.abs();
            }
            (s, mag * (4.0 * (d as f64 + 2.0)) * f64::EPSILON)
        })
        .collect()
}

/// `Some(1)` / `Some(-1)` when the `f64` Bernstein coefficients certify a
/// strict sign on `(0, 1)`; `None` when undecided.
pub(crate) fn certified_sign_f64(c: &[f64]) -> Option<i8> {
    let b = bernstein_f64(c);
    if b.is_empty() {
        return None;
    }
    if b.iter().all(|(v, e)| *v > *e) {
        Some(1)
    } else if b.iter().all(|(v, e)| *v < -*e) {
        Some(-1)
    } else {
        None
    }
}

/// Sign of `p` on `(0,1)` when it has no interior zero; exact.
pub(crate) fn exact_sign_unit(p: &Poly) -> Option<i8> {
    let b = bernstein(&p.coeffs());
    if b.iter().all(|x| !x.is_negative()) && b.iter().any(|x| x.is_positive()) {
        Some(1)
    } else if b.iter().all(|x| !x.is_positive()) && b.iter().any(|x| x.is_negative()) {
        Some(-1)
    } else {
        None
    }
}

fn binomials(d: usize) -> Vec<Vec<u128>> {
    let mut b = vec![vec![0u128; d + 1]; d + 1];
    for i in 0..=d {
        b[i][0] = 1;
        for k in 1..=i {
            b[i][k] = b[i - 1][k - 1] + if k < i { b[i - 1][k] } else { 0 };
        }
    }
    b
}

fn variations(b: &[Q]) -> usize {
    let mut last = 0i8;
    let mut v = 0;
    for x in b {
        let s = if x.is_positive() {
            1
        } else if x.is_negative() {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                v += 1;
            }
            last = s;
        }
    }
    v
}

/// Split Bernstein coefficients at the midpoint.
fn casteljau_half(b: &[Q]) -> (Vec<Q>, Vec<Q>) {
    let n = b.len();
    let half = Q::new(1.into(), 2.into());
    let mut work = b.to_vec();
    let mut left = Vec::with_capacity(n);
    let mut right = vec![Q::zero(); n];
    left.push(work[0].clone());
    right[n - 1] = work[n - 1].clone();
    for r in 1..n {
        for i in 0..n - r {
            work[i] = (&work[i] + &work[i + 1]) * &half;
        }
        left.push(work[0].clone());
        right[n - 1 - r] = work[n - 1 - r].clone();
    }
    (left, right)
}

/// An isolating interval `[lo, hi]` of a root in `(0, 1)`; `lo == hi` marks
/// an exactly located root.
#[derive(Debug, Clone, PartialEq)]
pub struct RootInterval {
    pub lo: Q,
    pub hi: Q,
}

/// Isolate the distinct real roots of `p` in the open interval `(0, 1)` and
/// refine each to width at most `width`.
pub fn isolate_roots_unit(p: &Poly, width: &Q) -> Vec<RootInterval> {
    if p.degree().unwrap_or(0) == 0 {
        return Vec::new();
    }
    let sf = p.squarefree();
    let b = bernstein(&sf.coeffs());
    let mut out = Vec::new();
    let mut stack = vec![(Q::zero(), Q::one(), b)];
    while let Some((lo, hi, b)) = stack.pop() {
        let v = variations(&b);
        if v == 0 {
            continue;
        }
        if v == 1 {
            out.push(refine(&sf, lo, hi, b, width));
            continue;
        }
        let mid = (&lo + &hi) / Q::from_integer(2.into());
        let (l, r) = casteljau_half(&b);
        if sf.eval(&mid).is_zero() {
            out.push(RootInterval { lo: mid.clone(), hi: mid.clone() });
        }
        stack.push((mid.clone(), hi, r));
        stack.push((lo, mid, l));
    }
    out.sort_by(|a, b| a.lo.cmp(&b.lo));
    out
}

fn refine(sf: &Poly, mut lo: Q, mut hi: Q, mut b: Vec<Q>, width: &Q) -> RootInterval {
    let two = Q::from_integer(2.into());
    while &(&hi - &lo) > width {
        let mid = (&lo + &hi) / &two;
        if sf.eval(&mid).is_zero() {
            return RootInterval { lo: mid.clone(), hi: mid };
        }
        let (l, r) = casteljau_half(&b);
        if variations(&l) == 1 {
            hi = mid;
            b = l;
        } else {
            lo = mid;
            b = r;
        }
    }
    RootInterval { lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    #[test]
    fn isolates_simple_and_double_roots() {
        // (t - 1/3)(t - 1/2)^2 (t - 2)
        let f = &(&Poly::from_coeffs(vec![q(-1, 3), qi(1)]) * &Poly::from_coeffs(vec![q(-1, 2), qi(1)]))
            * &(&Poly::from_coeffs(vec![q(-1, 2), qi(1)]) * &Poly::from_coeffs(vec![qi(-2), qi(1)]));
        let w = q(1, 1 << 40);
        let roots = isolate_roots_unit(&f, &w);
        assert_eq!(roots.len(), 2);
        assert!(roots[0].lo <= q(1, 3) && q(1, 3) <= roots[0].hi);
        assert!(&roots[0].hi - &roots[0].lo <= w);
        assert_eq!(roots[1].lo, q(1, 2));
    }

    #[test]
    fn sign_certificates_agree() {
        let f = Poly::from_coeffs(vec![qi(1), qi(-1), q(1, 4)]); // (1 - t/2)^2 > 0 on (0,1)
        assert_eq!(exact_sign_unit(&f), Some(1));
        assert_eq!(certified_sign_f64(&[1.0, -1.0, 0.25]), Some(1));
        let g = Poly::from_coeffs(vec![q(-1, 2), qi(1)]);
        assert_eq!(exact_sign_unit(&g), None);
        assert_eq!(certified_sign_f64(&[-0.5, 1.0]), None);
        // t^3 is zero at 0 only; Bernstein still certifies the open interval.
        assert_eq!(exact_sign_unit(&Poly::from_coeffs(vec![qi(0), qi(0), qi(0), qi(1)])), Some(1));
    }
}
