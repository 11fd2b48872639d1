//! Certified mollifiers: unit integral, support in `[0, ε]`, M-norm below `ε`.

use num_bigint::BigInt;
use num_traits::{One, Signed};
use serde::Serialize;

use crate::rational::{format_q, serde_q, Q};
use crate::real::Real;
use crate::tower::{
    build_tower, check_c_condition, derivative_norms, check_growth_condition, log_b_all, tail_ratio_test, truncated_m_norm_for, CCondition,
    DecaySequence, GrowthReport, LogDecay, MNormReport, Tower,
};
use crate::weights::{build_minorant, MinorantResult, WeightSequence, DEFAULT_HORIZON};
use crate::{Error, GrowthPoly, Result};

/// Orders `n ≤` this are checked against the decay bound one by one.
pub const CERT_HORIZON: usize = 48;
/// Depth of the exact realization of a mollifier.
pub const REALIZATION_DEPTH: usize = 10;
/// Truncation level of measured M-norms.
pub const M_NORM_TRUNCATION: usize = 10;

pub fn default_ratio_grid() -> Vec<Q> {
    vec![Q::new(1.into(), 4.into()), Q::new(1.into(), 8.into()), Q::new(1.into(), 16.into())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMethod {
    /// `a_n = s r^n` with `r` from the grid.
    GeometricGrid,
    /// Dyadic head chosen order by order, then ratio `1/4`.
    DyadicHead,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridAttempt {
    #[serde(with = "serde_q")]
    pub r: Q,
    /// Number of halvings of `s` tried.
    pub shrinks: usize,
    /// Best `max_n (log B_n - T_n)` seen; certification needs `≤ 0`.
    pub best_log_margin: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCertificate {
    pub a: DecaySequence,
    pub method: DecayMethod,
    pub grid_attempts: Vec<GridAttempt>,
    pub c_condition: CCondition,
    pub horizon: usize,
    /// `log B_n - P(n) - q log N_n` for `n ≤ horizon`.
    pub log_margins: Vec<Real>,
    /// `max_n B_n / (e^{P(n)} N_n^q)`.
    pub margin: Real,
    pub tail_ratio_test: bool,
    pub growth: GrowthReport,
    #[serde(with = "serde_q")]
    pub support_length: Q,
    pub certified: bool,
}

/// `T_n = P(n) + q log N_n`.
fn targets(n_seq: &WeightSequence, poly: &GrowthPoly, upto: usize) -> Result<Vec<Real>> {
    let qr = Real::from_rational(n_seq.q());
    (0..=upto)
        .map(|n| {
            n_seq
                .log_m(n)
                .map(|l| poly.eval_real(n as u64) + &qr * &l)
                .ok_or_else(|| Error::Precondition(format!("weight sequence has no value at n = {n}")))
        })
        .collect()
}

/// `log B_n` from `ℓ_j = -ln a_j` with `c = 2/3` assumed (all ratios ≤ 1/4).
fn log_b_from_ell(ell: &[Real], n: usize, inv_p: &Real, ln_two_minus_c: &Real, ln2: &Real, prefix: &Real) -> Real {
    inv_p * (ln_two_minus_c + Real::from_i64(n as i64) * ln2 - &ell[n]) + prefix + &ell[n]
}

/// Re-check the decay bound for `a` against `N` from scratch.
pub fn certify_decay(
    a: &DecaySequence,
    n_seq: &WeightSequence,
    p: &Q,
    poly: &GrowthPoly,
    eps: &Q,
    horizon: usize,
) -> Result<DecayCertificate> {
    let t = targets(n_seq, poly, horizon)?;
    let c_condition = check_c_condition(a);
    let support_length = a.support_length();
    let growth = check_growth_condition(&LogDecay::Rational(a.clone()), p, horizon)?;
    let Some(c) = c_condition.c.clone() else {
        return Ok(DecayCertificate {
            a: a.clone(),
            method: DecayMethod::GeometricGrid,
            grid_attempts: Vec::new(),
            c_condition,
            horizon,
            log_margins: Vec::new(),
            margin: Real::from_f64(f64::INFINITY),
            tail_ratio_test: false,
            growth,
            support_length,
            certified: false,
        });
    };
    let log_margins: Vec<Real> = log_b_all(a, horizon, p, &c).into_iter().zip(&t).map(|(b, tn)| b - tn).collect();
    let max_margin = log_margins.iter().cloned().reduce(Real::max).unwrap();
    let qr = Real::from_rational(n_seq.q());
    let target = |n: usize| n_seq.log_m(n).map(|l| poly.eval_real(n as u64) + &qr * &l);
    let tail = tail_ratio_test(a, p, &c, target, horizon);
    let certified = !max_margin.is_positive() && tail && growth.pass && &support_length <= eps;
    Ok(DecayCertificate {
        a: a.clone(),
        method: DecayMethod::GeometricGrid,
        grid_attempts: Vec::new(),
        c_condition,
        horizon,
        margin: max_margin.exp(),
        log_margins,
        tail_ratio_test: tail,
        growth,
        support_length,
        certified,
    })
}

/// A decay sequence whose tower satisfies the decay bound for `N` up to `horizon`,
/// with total support at most `eps`.  Tries the geometric grid first and
/// falls back to a dyadic head when no grid point certifies.
pub fn synthesize_decay(
    n_seq: &WeightSequence,
    p: &Q,
    poly: &GrowthPoly,
    eps: &Q,
    horizon: usize,
) -> Result<DecayCertificate> {
    if !eps.is_positive() {
        return Err(Error::Domain(format!("eps must be positive, got {}", format_q(eps))));
    }
    let t = targets(n_seq, poly, horizon)?;
    let mut attempts = Vec::new();
    for r in default_ratio_grid() {
        let (found, attempt) = try_geometric(&r, &t, n_seq, p, poly, eps, horizon)?;
        attempts.push(attempt);
        if let Some(mut cert) = found {
            cert.grid_attempts = attempts;
            return Ok(cert);
        }
    }
    let a = dyadic_head(&t, p, eps, horizon)?;
    let mut cert = certify_decay(&a, n_seq, p, poly, eps, horizon)?;
    cert.method = DecayMethod::DyadicHead;
    cert.grid_attempts = attempts;
    Ok(cert)
}

const MAX_SHRINKS: usize = 40;

/// Largest `k` with `a_n = 2^{-k}` the dyadic head may use.
pub const MAX_DYADIC_EXPONENT: i64 = 1 << 16;

fn try_geometric(
    r: &Q,
    t: &[Real],
    n_seq: &WeightSequence,
    p: &Q,
    poly: &GrowthPoly,
    eps: &Q,
    horizon: usize,
) -> Result<(Option<DecayCertificate>, GridAttempt)> {
    let mut s = eps * (Q::one() - r);
    let c = check_c_condition(&DecaySequence::geometric(Q::one(), r.clone())?).c;
    let mut best = Real::from_f64(f64::INFINITY);
    let Some(c) = c else {
        return Ok((None, GridAttempt { r: r.clone(), shrinks: 0, best_log_margin: best }));
    };
    for shrink in 0..MAX_SHRINKS {
        let a = DecaySequence::geometric(s.clone(), r.clone())?;
        // Quick screen on the closed form before the full re-check.
        let worst = log_b_all(&a, horizon, p, &c).into_iter().zip(t).map(|(b, tn)| b - tn).reduce(Real::max).unwrap();
        if worst < best {
            best = worst.clone();
        }
        if !worst.is_positive() {
            let cert = certify_decay(&a, n_seq, p, poly, eps, horizon)?;
            if cert.certified {
                let attempt = GridAttempt { r: r.clone(), shrinks: shrink, best_log_margin: best };
                return Ok((Some(cert), attempt));
            }
        }
        s /= Q::from_integer(2.into());
    }
    Ok((None, GridAttempt { r: r.clone(), shrinks: MAX_SHRINKS, best_log_margin: best }))
}

/// Dyadic `a_n = 2^{-k_n}`, each `k_n` the least integer meeting the decay bound at
/// order `n` and `a_n ≤ a_{n-1}/4`; the head stops as soon as continuing
/// with ratio `1/4` meets every remaining order.
fn dyadic_head(t: &[Real], p: &Q, eps: &Q, horizon: usize) -> Result<DecaySequence> {
    let ln2 = Real::ln2();
    let ln4 = Real::from_i64(4).ln();
    let inv_p = Real::one() / Real::from_rational(p);
    let ln_43 = (Real::from_i64(4) / Real::from_i64(3)).ln();
    let denom = &inv_p - Real::one();
    // Σ a ≤ (4/3) a_0 ≤ eps.
    let mut k0_min = 0i64;
    while Q::new(BigInt::from(4), BigInt::from(3) * (BigInt::one() << k0_min as usize)) > *eps {
        k0_min += 1;
    }
    let quarter = Q::new(1.into(), 4.into());
    let mut ks: Vec<i64> = Vec::new();
    let mut ell: Vec<Real> = Vec::new();
    let mut prefix = Real::zero();
    for n in 0..=horizon {
        let req = (&inv_p * (&ln_43 + Real::from_i64(n as i64) * &ln2) + &prefix - &t[n]) / &denom;
        let mut k = (req.to_f64() / ln2.to_f64()).ceil() as i64;
        if n == 0 {
            k = k.max(k0_min);
        } else {
            k = k.max(ks[n - 1] + 2);
        }
        // Guard against f64 rounding in the ceiling.
        while Real::from_i64(k) * &ln2 < req {
            k += 1;
        }
        if k > MAX_DYADIC_EXPONENT {
            return Err(Error::Resource(format!(
                "order {n} needs a_n = 2^-{k}; exponents above 2^-{MAX_DYADIC_EXPONENT} are not realized"
            )));
        }
        ks.push(k);
        ell.push(Real::from_i64(k) * &ln2);
        prefix = prefix + &ell[n];
        // Would the ratio-1/4 continuation meet all later orders?
        let mut pre = prefix.clone();
        let mut ell_ext = ell.clone();
        let mut ok = true;
        for m in n + 1..=horizon {
            let e = &ell_ext[m - 1] + &ln4;
            ell_ext.push(e);
            let lb = log_b_from_ell(&ell_ext, m, &inv_p, &ln_43, &ln2, &pre);
            pre = pre + &ell_ext[m];
            if lb > t[m] {
                ok = false;
                break;
            }
        }
        if ok {
            let head: Vec<Q> = ks.iter().map(|&k| Q::new(1.into(), BigInt::one() << k as usize)).collect();
            return DecaySequence::table_with_tail(head, quarter);
        }
    }
    Err(Error::Certification(format!("no dyadic head up to order {horizon} meets the decay bound")))
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateChecks {
    pub unit_integral: bool,
    pub support: bool,
    pub m_norm: bool,
    pub decay_bound: bool,
}

impl CertificateChecks {
    pub fn all(&self) -> bool {
        self.unit_integral && self.support && self.m_norm && self.decay_bound
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MollifierCertificate {
    pub a: DecaySequence,
    pub decay: DecayCertificate,
    pub minorant: MinorantResult,
    pub poly: GrowthPoly,
    /// The growth polynomial is the built-in default rather than one
    /// derived from a proof.
    pub poly_is_default: bool,
    #[serde(with = "serde_q")]
    pub eps: Q,
    #[serde(with = "serde_q")]
    pub support_length: Q,
    pub depth: usize,
    pub unit_integral: bool,
    /// Measured `‖v^{(n)}‖_p / M_n` for `n ≤ N`, with tower tail bounds.
    pub m_norm_report: MNormReport,
    /// `max_{n ≤ horizon} B_n / (e^{P(n)} N_n^q)`.
    pub decay_bound_margin: Real,
    /// `max_{n ≤ depth} ‖u_{a,depth}^{(n)}‖_p / (e^{P(n)} N_n^q)`.
    pub decay_bound_measured_margin: Real,
    /// `max_n (e^{P(n)} N_n^q / M_n)`, the chained bound on `‖v‖_M`.
    pub chained_bound: Real,
    pub checks: CertificateChecks,
}

impl MollifierCertificate {
    pub fn valid(&self) -> bool {
        self.checks.all()
    }
}

#[derive(Debug)]
pub struct Mollifier {
    pub certificate: MollifierCertificate,
    pub tower: Tower,
}

impl Mollifier {
    /// The exact realization `u_{a,depth}`.
    pub fn realization(&self) -> &crate::piecewise::PiecewisePolynomial {
        self.tower.realization()
    }
}

pub fn build_mollifier(m: &WeightSequence, p: &Q, eps: &Q) -> Result<Mollifier> {
    build_mollifier_with(m, p, eps, &GrowthPoly::default_quadratic(), REALIZATION_DEPTH)
}

pub fn build_mollifier_with(m: &WeightSequence, p: &Q, eps: &Q, poly: &GrowthPoly, depth: usize) -> Result<Mollifier> {
    if p != m.p() {
        return Err(Error::Domain("p must match the weight sequence".into()));
    }
    if !eps.is_positive() {
        return Err(Error::Domain(format!("eps must be positive, got {}", format_q(eps))));
    }
    let horizon = DEFAULT_HORIZON.max(CERT_HORIZON);
    let minorant = build_minorant(m, poly, eps, horizon).map_err(|e| e.at("minorant"))?;
    let decay = synthesize_decay(&minorant.n, p, poly, eps, CERT_HORIZON).map_err(|e| e.at("synthesize_decay"))?;
    if !decay.certified {
        return Err(Error::Certification(format!(
            "decay sequence fails the decay bound: margin {}, tail test {}, support {}",
            decay.margin.to_decimal(6),
            decay.tail_ratio_test,
            format_q(&decay.support_length)
        ))
        .at("synthesize_decay"));
    }
    let a = decay.a.clone();
    let tower = build_tower(&a, depth).map_err(|e| e.at("realize"))?;
    let certificate = assemble(&a, decay, minorant, poly, eps, &tower, m, p)?;
    Ok(Mollifier { certificate, tower })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    a: &DecaySequence,
    decay: DecayCertificate,
    minorant: MinorantResult,
    poly: &GrowthPoly,
    eps: &Q,
    tower: &Tower,
    m: &WeightSequence,
    p: &Q,
) -> Result<MollifierCertificate> {
    let depth = tower.depth();
    let n_trunc = M_NORM_TRUNCATION.min(depth);
    let m_norm_report = truncated_m_norm_for(tower, m, p, n_trunc, CERT_HORIZON).map_err(|e| e.at("m_norm"))?;
    let t = targets(&minorant.n, poly, depth)?;
    let mut measured = Real::zero();
    for (nv, tn) in derivative_norms(tower, p, depth)?.iter().zip(&t) {
        if !nv.value.is_zero() {
            measured = measured.max((nv.value.ln() - tn).exp());
        }
    }
    let unit_integral = tower.realization().integral()? == Q::one();
    let support_length = a.support_length();
    let decay_bound_margin = decay.margin.clone();
    let eps_r = Real::from_rational(eps);
    let checks = CertificateChecks {
        unit_integral,
        support: &support_length <= eps,
        m_norm: m_norm_report.m_norm < eps_r
            && m_norm_report.m_norm_bound < eps_r
            && m_norm_report.ratio_test,
        decay_bound: decay_bound_margin <= Real::one() && measured <= Real::one() && decay.tail_ratio_test,
    };
    Ok(MollifierCertificate {
        a: a.clone(),
        poly_is_default: *poly == GrowthPoly::default_quadratic(),
        chained_bound: minorant.bound_margin.clone(),
        decay,
        minorant,
        poly: poly.clone(),
        eps: eps.clone(),
        support_length,
        depth,
        unit_integral,
        m_norm_report,
        decay_bound_margin,
        decay_bound_measured_margin: measured,
        checks,
    })
}

/// Re-derive the four invariants from the certificate's decay sequence and
/// minorant alone.
pub fn recheck(cert: &MollifierCertificate, m: &WeightSequence, p: &Q) -> Result<CertificateChecks> {
    let tower = build_tower(&cert.a, cert.depth)?;
    let decay = certify_decay(&cert.a, &cert.minorant.n, p, &cert.poly, &cert.eps, CERT_HORIZON)?;
    let fresh = assemble(&cert.a, decay, cert.minorant.clone(), &cert.poly, &cert.eps, &tower, m, p)?;
    Ok(fresh.checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};
    use crate::weights::WeightSequence;

    fn doubling() -> WeightSequence {
        WeightSequence::geometric_exponential(qi(1), q(1, 2), DEFAULT_HORIZON).unwrap()
    }

    #[test]
    fn grid_fails_and_dyadic_head_certifies() {
        let m = doubling();
        let poly = GrowthPoly::default_quadratic();
        let eps = q(1, 10);
        let minorant = build_minorant(&m, &poly, &eps, DEFAULT_HORIZON).unwrap();
        let cert = synthesize_decay(&minorant.n, &q(1, 2), &poly, &eps, CERT_HORIZON).unwrap();
        assert_eq!(cert.grid_attempts.len(), 3);
        assert!(cert.certified, "margin {}", cert.margin.to_decimal(8));
        assert_eq!(cert.method, DecayMethod::DyadicHead);
        assert!(cert.support_length <= eps);
        // Independent re-check of the decay bound on the emitted sequence.
        let again = certify_decay(&cert.a, &minorant.n, &q(1, 2), &poly, &eps, CERT_HORIZON).unwrap();
        assert!(again.certified);
    }

    #[test]
    fn power_weights_are_rejected() {
        let m = WeightSequence::power(qi(1), qi(2), q(1, 2), DEFAULT_HORIZON).unwrap();
        let err = build_mollifier(&m, &q(1, 2), &q(1, 10)).unwrap_err();
        assert!(matches!(err.root(), Error::Precondition(_)));
    }

    #[test]
    fn trivial_targets_accept_geometric_decay() {
        // With a huge target every grid point passes at the first try.
        let logs: Vec<Real> = (0..=120).map(|n| Real::from_i64(1000 * (n as i64 + 1) * (n as i64 + 1))).collect();
        let n_seq = WeightSequence::table_from_logs(logs, q(1, 2)).unwrap();
        let poly = GrowthPoly(vec![qi(0), qi(0), qi(1)]);
        let cert = synthesize_decay(&n_seq, &q(1, 2), &poly, &qi(1), CERT_HORIZON).unwrap();
        assert!(cert.certified);
        assert_eq!(cert.method, DecayMethod::GeometricGrid);
        assert_eq!(cert.grid_attempts[0].shrinks, 0);
    }
}
