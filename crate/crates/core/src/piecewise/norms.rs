//! Sup norms and `L^p` quasi-norms of piecewise polynomials.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::{Mutex, OnceLock};

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use super::roots::{certified_sign_f64, exact_sign_unit, isolate_roots_unit};
use super::PiecewisePolynomial;
use crate::poly::Poly;
use crate::quad;
use crate::rational::{exact_pow, exponent_parts, frac_to_f64_scaled, serde_q, serde_q_opt, Q};
use num_bigint::BigInt;
use crate::real::{ln_rational, Real};
use crate::{Error, Result};

/// Default relative tolerance for quadrature-based quasi-norms.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct NormValue {
    /// `‖f‖_p`.
    pub value: Real,
    /// `∫ |f|^p`.
    pub pth_power: Real,
    /// Closed form (no quadrature) was used.
    pub exact: bool,
    /// Rational value of `‖f‖_p` when representable.
    #[serde(with = "serde_q_opt")]
    pub exact_value: Option<Q>,
    #[serde(with = "serde_q_opt")]
    pub exact_pth_power: Option<Q>,
    /// Estimated relative error of `pth_power` (zero on the closed-form path).
    pub rel_err: f64,
}

impl NormValue {
    fn zero() -> Self {
        NormValue {
            value: Real::zero(),
            pth_power: Real::zero(),
            exact: true,
            exact_value: Some(Q::zero()),
            exact_pth_power: Some(Q::zero()),
            rel_err: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupNorm {
    #[serde(with = "serde_q")]
    pub lower: Q,
    #[serde(with = "serde_q")]
    pub upper: Q,
    pub exact: bool,
}

impl SupNorm {
    pub fn value(&self) -> Real {
        if self.exact {
            Real::from_rational(&self.upper)
        } else {
            Real::from_rational(&((&self.lower + &self.upper) / Q::from_integer(2.into())))
        }
    }

    pub fn exact_value(&self) -> Option<&Q> {
        self.exact.then_some(&self.upper)
    }
}

/// `‖f‖_∞`: exact when every critical point is located exactly (always for
/// degree ≤ 2), otherwise rational bounds from critical points isolated to
/// width `1e-20`.
pub fn sup_norm(f: &PiecewisePolynomial) -> SupNorm {
    let mut lower = f.tail.abs();
    let mut upper = lower.clone();
    for (i, p) in f.pieces.iter().enumerate() {
        let h = f.width(i);
        let mut cand = p.constant_term().abs().max(p.eval(&h).abs());
        match p.degree() {
            None | Some(0) | Some(1) => {}
            Some(2) => {
                let c = p.coeffs();
                let t = -&c[1] / (&c[2] * Q::from_integer(2.into()));
                if t.is_positive() && t < h {
                    cand = cand.max(p.eval(&t).abs());
                }
            }
            Some(_) => {
                let pu = p.dilate(&h);
                let dp = pu.derivative();
                let b2: Q = pu
                    .coeffs()
                    .iter()
                    .enumerate()
                    .skip(2)
                    .map(|(k, c)| c.abs() * Q::from_integer(((k * (k - 1)) as i64).into()))
                    .fold(Q::zero(), |a, b| a + b);
                // Width 2^-67 < 1e-20 in x, expressed in the unit variable.
                let w = Q::new(1.into(), num_bigint::BigInt::one() << 67usize) / &h;
                for r in isolate_roots_unit(&dp, &w) {
                    let lo_v = pu.eval(&r.lo).abs().max(pu.eval(&r.hi).abs());
                    if r.lo == r.hi {
                        cand = cand.max(lo_v);
                        continue;
                    }
                    let d = &r.hi - &r.lo;
                    let up = &lo_v + &d * (dp.eval(&r.lo).abs() + &d * &b2);
                    lower = lower.max(lo_v);
                    upper = upper.max(up);
                }
            }
        }
        lower = lower.max(cand.clone());
        upper = upper.max(cand);
    }
    let exact = lower == upper;
    SupNorm { lower, upper, exact }
}

pub fn lp_quasinorm_default(f: &PiecewisePolynomial, p: &Q) -> Result<NormValue> {
    lp_quasinorm(f, p, DEFAULT_TOL)
}

/// `‖f‖_p = (∫ |f|^p)^{1/p}` for `0 < p ≤ 1`.
pub fn lp_quasinorm(f: &PiecewisePolynomial, p: &Q, tol: f64) -> Result<NormValue> {
    if !p.is_positive() || p > &Q::one() {
        return Err(Error::Domain(format!("exponent must lie in (0, 1], got {p}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if !f.is_compact() {
        return Err(Error::Domain("quasi-norm of a function with nonzero tail is infinite".into()));
    }
    if f.is_zero() {
        return Ok(NormValue::zero());
    }
    if f.is_piecewise_constant() {
        return Ok(constant_path(f, p));
    }
    let key = memo_key(f, p, tol);
    if let Some(v) = memo().lock().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let v = quadrature_path(f, p, tol)?;
    let mut m = memo().lock().unwrap();
    if m.len() >= MEMO_CAPACITY {
        m.clear();
    }
    m.insert(key, v.clone());
    Ok(v)
}

const MEMO_CAPACITY: usize = 4096;

type MemoKey = (u64, u64, (BigInt, BigInt), u64);

/// Quadrature results keyed by a 128-bit content hash; the pipelines revisit
/// the same functions many times.
fn memo() -> &'static Mutex<HashMap<MemoKey, NormValue>> {
    static MEMO: OnceLock<Mutex<HashMap<MemoKey, NormValue>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

fn memo_key(f: &PiecewisePolynomial, p: &Q, tol: f64) -> MemoKey {
    let h = |salt: u64| {
        let mut s = DefaultHasher::new();
        salt.hash(&mut s);
        f.content_hash(&mut s);
        s.finish()
    };
    (h(0x9e37_79b9_7f4a_7c15), h(0xc2b2_ae3d_27d4_eb4f), (p.numer().clone(), p.denom().clone()), tol.to_bits())
}

fn constant_path(f: &PiecewisePolynomial, p: &Q) -> NormValue {
    let mut groups: BTreeMap<Q, Q> = BTreeMap::new();
    for (i, piece) in f.pieces.iter().enumerate() {
        let c = piece.constant_term().abs();
        if c.is_zero() {
            continue;
        }
        *groups.entry(c).or_insert_with(Q::zero) += f.width(i);
    }
    let parts = exponent_parts(p);
    let pr = Real::from_rational(p);
    let mut exact_sum = Some(Q::zero());
    let mut sum = Real::zero();
    for (c, len) in &groups {
        let cp = parts.and_then(|(a, b)| exact_pow(c, a, b));
        match (&mut exact_sum, &cp) {
            (Some(s), Some(v)) => *s += v * len,
            _ => exact_sum = None,
        }
        let term = match &cp {
            Some(v) => Real::from_rational(v),
            None => Real::from_rational(c).powr(&pr),
        };
        sum = sum + term * Real::from_rational(len);
    }
    // A single group gives ‖f‖_p = c |E|^{1/p}, rational whenever |E|^{1/p} is.
    let exact_value = match (&exact_sum, parts) {
        (Some(s), Some((a, b))) => exact_pow(s, b, a),
        _ => None,
    }
    .or_else(|| {
        if groups.len() != 1 {
            return None;
        }
        let (c, len) = groups.iter().next()?;
        let (a, b) = parts?;
        Some(c * exact_pow(len, b, a)?)
    });
    let pth_power = match &exact_sum {
        Some(s) => Real::from_rational(s),
        None => sum,
    };
    let value = match &exact_value {
        Some(v) => Real::from_rational(v),
        None => pth_power.powr(&(Real::one() / pr)),
    };
    NormValue { value, pth_power, exact: true, exact_value, exact_pth_power: exact_sum, rel_err: 0.0 }
}

fn quadrature_path(f: &PiecewisePolynomial, p: &Q, tol: f64) -> Result<NormValue> {
    let pf = crate::rational::to_f64(p);
    let piece_tol = tol * pf / 4.0;
    // Each piece is `e^{scale} ∫_0^1 |monic|^p`, or a constant contribution.
    let mut constant_logs: Vec<f64> = Vec::new();
    let mut scaled: Vec<(f64, usize)> = Vec::new();
    let mut monics: Vec<Poly> = Vec::new();
    let mut index: HashMap<Poly, usize> = HashMap::new();
    for (i, piece) in f.pieces.iter().enumerate() {
        if piece.is_zero() {
            continue;
        }
        let h = f.width(i);
        let ln_h = ln_rational(&h);
        if piece.is_constant() {
            constant_logs.push(pf * ln_rational(&piece.constant_term().abs()) + ln_h);
            continue;
        }
        let pu = piece.dilate(&h);
        let lead = pu.leading().unwrap().clone();
        let monic = pu.scale(&lead.recip());
        let k = *index.entry(monic.clone()).or_insert_with(|| {
            monics.push(monic);
            monics.len() - 1
        });
        scaled.push((ln_h + pf * ln_rational(&lead.abs()), k));
    }
    if constant_logs.is_empty() && scaled.is_empty() {
        return Ok(NormValue::zero());
    }
    // Loose pass for the size of the total.
    let rough: Vec<f64> = monics.iter().map(|m| unit_integral(m, pf, 1e-4, 0.0).map(|v| v.0)).collect::<Result<_>>()?;
    let mut rough_logs = constant_logs.clone();
    rough_logs.extend(scaled.iter().map(|(s, k)| s + rough[*k]));
    let ln_total = log_sum_exp(&rough_logs);
    // Absolute budget per piece, expressed in units of its monic integral.
    let count = scaled.len().max(1) as f64;
    let mut abs_need = vec![f64::INFINITY; monics.len()];
    for (s, k) in &scaled {
        let b = (ln_total + (piece_tol / count).ln() - s).exp();
        abs_need[*k] = abs_need[*k].min(b);
    }
    let fine: Vec<(f64, f64)> = monics
        .iter()
        .zip(&abs_need)
        .map(|(m, need)| unit_integral(m, pf, piece_tol, *need))
        .collect::<Result<_>>()?;
    let mut logs = constant_logs;
    let mut errs = vec![0.0; logs.len()];
    for (s, k) in &scaled {
        let (ln_j, rel) = fine[*k];
        if ln_j == f64::NEG_INFINITY {
            continue;
        }
        logs.push(s + ln_j);
        errs.push(rel);
    }
    if logs.is_empty() {
        return Ok(NormValue::zero());
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut e = 0.0;
    for (l, r) in logs.iter().zip(&errs) {
        let w = (l - m).exp();
        sum += w;
        e += w * r;
    }
    let pth_power = Real::from_f64(m).exp() * Real::from_f64(sum);
    let value = pth_power.powr(&(Real::one() / Real::from_rational(p)));
    Ok(NormValue {
        value,
        pth_power,
        exact: false,
        exact_value: None,
        exact_pth_power: None,
        rel_err: e / sum,
    })
}

/// `a / (d 2^e)` as an unevaluated sum `hi + lo`.
fn split_coeff(a: &BigInt, d: &BigInt, e: i64) -> (f64, f64) {
    let hi = frac_to_f64_scaled(a, d, e);
    if hi == 0.0 || !hi.is_finite() {
        return (hi, 0.0);
    }
    let (m, k, sign) = num_traits::Float::integer_decode(hi);
    let m = BigInt::from(m) * BigInt::from(sign);
    let s = k as i64 + e;
    let lo = if s >= 0 {
        frac_to_f64_scaled(&(a - ((m * d) << s as usize)), d, e)
    } else {
        let sh = (-s) as usize;
        frac_to_f64_scaled(&((a << sh) - m * d), &(d << sh), e)
    };
    (hi, lo)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln ∫_0^1 |P(τ)|^p dτ` and its relative error estimate, to relative
/// tolerance `tol` or absolute tolerance `abs_tol` on the integral.
fn unit_integral(pu: &Poly, p: f64, tol: f64, abs_tol: f64) -> Result<(f64, f64)> {
    let den = pu.denominator();
    let e = pu.numerators().iter().filter(|a| !a.is_zero()).map(|a| a.bits() as i64).max().unwrap_or(0)
        - den.bits() as i64;
    // Coefficients split as hi + lo so that Horner runs in double-double.
    let c: Vec<(f64, f64)> = pu.numerators().iter().map(|a| split_coeff(a, den, e)).collect();
    let hi_only: Vec<f64> = c.iter().map(|v| v.0).collect();
    let unscale = p * (e as f64) * std::f64::consts::LN_2;
    let abs_scaled = if abs_tol.is_finite() { abs_tol * (-unscale).exp() } else { 0.0 };
    let mut cuts = vec![0.0f64, 1.0];
    if certified_sign_f64(&hi_only).is_none() && exact_sign_unit(pu).is_none() {
        let w = Q::new(1.into(), num_bigint::BigInt::one() << 60usize);
        for r in isolate_roots_unit(pu, &w) {
            let mid = crate::rational::to_f64(&((&r.lo + &r.hi) / Q::from_integer(2.into())));
            cuts.push(mid);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
    }
    let integrand = |x: f64| {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for &(ah, al) in c.iter().rev() {
            // (hi + lo) * x + (ah + al)
            let ph = hi * x;
            let pl = hi.mul_add(x, -ph) + lo * x;
            let (sh, sl) = two_sum(ph, ah);
            let t = sl + pl + al;
            hi = sh + t;
            lo = t - (hi - sh);
        }
        (hi + lo).abs().powf(p)
    };
    let nseg = (cuts.len() - 1) as f64;
    // One panel per segment sizes the whole integral, so a segment that
    // contributes almost nothing (e.g. beside a high-order root, where only
    // rounding noise remains) is held to an absolute share of the total.
    let rough: f64 = cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| quad::gk15(&integrand, w[0], w[1]).0).sum();
    let floor = (0.5 * tol * rough / nseg).max(abs_scaled / nseg);
    let mut total = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let r = quad::integrate(integrand, w[0], w[1], tol, floor);
        if !r.converged {
            return Err(Error::Resource(format!(
                "quadrature did not reach relative tolerance {tol:e} (error {:e})",
                r.abs_err / r.value.abs().max(f64::MIN_POSITIVE)
            )));
        }
        total += r.value;
        err += r.abs_err;
    }
    if total <= 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok((total.ln() + unscale, err / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn tent() -> PiecewisePolynomial {
        PiecewisePolynomial::box_kernel(&qi(1)).unwrap().convolve_box(&qi(1)).unwrap()
    }

    #[test]
    fn sup_norms_of_simple_shapes() {
        let s = sup_norm(&tent());
        assert!(s.exact);
        assert_eq!(s.upper, qi(1));
        assert_eq!(sup_norm(&tent().neg()).upper, qi(1));
        assert_eq!(sup_norm(&PiecewisePolynomial::box_kernel(&q(1, 4)).unwrap()).upper, qi(4));
    }

    #[test]
    fn sup_norm_of_cubic_brackets_interior_maximum() {
        // t(1-t)(1+t) on [0,1] peaks at 1/sqrt(3) with value 2/(3 sqrt 3).
        let p = Poly::from_coeffs(vec![qi(0), qi(1), qi(0), qi(-1)]);
        let f = PiecewisePolynomial::new(vec![qi(0), qi(1)], vec![p]).unwrap();
        let s = sup_norm(&f);
        let want = 2.0 / (3.0 * 3f64.sqrt());
        assert!(!s.exact);
        assert!(crate::rational::to_f64(&s.lower) <= want + 1e-16);
        assert!(crate::rational::to_f64(&s.upper) >= want - 1e-16);
        assert!(&s.upper - &s.lower < q(1, 1_000_000_000_000_000_000));
    }

    #[test]
    fn box_and_scaled_box_are_exact() {
        let b = PiecewisePolynomial::box_kernel(&qi(1)).unwrap();
        let n = lp_quasinorm_default(&b, &q(1, 2)).unwrap();
        assert_eq!(n.exact_value, Some(qi(1)));
        let n = lp_quasinorm_default(&b.scale(&qi(2)), &q(1, 2)).unwrap();
        assert_eq!(n.exact_value, Some(qi(2)));
    }

    #[test]
    fn tent_half_norm_matches_closed_form() {
        let n = lp_quasinorm_default(&tent(), &q(1, 2)).unwrap();
        assert!(!n.exact);
        let want = 16.0 / 9.0;
        assert!((n.value.to_f64() - want).abs() < 1e-10 * want, "{}", n.value);
    }

    #[test]
    fn sign_changing_piece_is_split_at_its_root() {
        // f(x) = x - 1/3 on [0,1]: ∫|f|^{1/2} = (2/3)((1/3)^{3/2} + (2/3)^{3/2})
        let f = PiecewisePolynomial::from_global(vec![qi(0), qi(1)], vec![Poly::from_coeffs(vec![q(-1, 3), qi(1)])])
            .unwrap();
        let n = lp_quasinorm_default(&f, &q(1, 2)).unwrap();
        let want: f64 = (2.0 / 3.0) * ((1.0f64 / 3.0).powf(1.5) + (2.0f64 / 3.0).powf(1.5));
        assert!((n.pth_power.to_f64() - want).abs() < 1e-11 * want);
    }

    #[test]
    fn rejects_bad_exponent() {
        assert!(lp_quasinorm_default(&tent(), &q(3, 2)).is_err());
        assert!(lp_quasinorm_default(&tent(), &qi(0)).is_err());
    }
}
