//! Weight sequences `M = {M_n}`: the `μ_M` classification, p-regularity,
//! shifts and the convex minorant `N` with `e^{P(n)} N_n^q / M_n < ε`.
//!
//! Values are kept as `log M_n` in high precision since `M_n` itself leaves
//! every floating-point range after a few dozen terms.

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::rational::{format_q, serde_q, Q};
use crate::real::{Real, COMPARE_REL_TOL};
use crate::{Error, GrowthPoly, Result};

pub const DEFAULT_HORIZON: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    /// `log M_n = κ q^{-n}`.
    GeometricExponential {
        #[serde(with = "serde_q")]
        kappa: Q,
    },
    /// `log M_n = κ q^{-n} / n^s` for `n ≥ 1`; `log M_0` is the largest
    /// nonnegative value keeping the sequence convex at `n = 1`.
    Tempered {
        #[serde(with = "serde_q")]
        kappa: Q,
        #[serde(with = "serde_q")]
        s: Q,
    },
    /// `log M_n = κ n^s`.
    Power {
        #[serde(with = "serde_q")]
        kappa: Q,
        #[serde(with = "serde_q")]
        s: Q,
    },
    /// Explicit values `log M_n`.
    Table { logs: Vec<Real> },
    /// Explicit `log M_n` on `[start, start + head.len())`, the closed form
    /// of `tail` elsewhere.
    Spliced { start: usize, head: Vec<Real>, tail: Box<WeightKind> },
}

impl WeightKind {
    pub fn tag(&self) -> &'static str {
        match self {
            WeightKind::GeometricExponential { .. } => "geometric-exponential",
            WeightKind::Tempered { .. } => "tempered",
            WeightKind::Power { .. } => "power",
            WeightKind::Table { .. } => "table",
            WeightKind::Spliced { .. } => "spliced",
        }
    }

    fn is_table(&self) -> bool {
        matches!(self, WeightKind::Table { .. })
    }

    /// `log M_n` at absolute index `n`; `None` past the end of a table.
    fn log_at(&self, n: usize, q: &Q) -> Option<Real> {
        match self {
            WeightKind::GeometricExponential { kappa } => {
                Some(Real::from_rational(kappa) * Real::from_rational(&q.recip()).powi(n as i64))
            }
            WeightKind::Tempered { kappa, s } => {
                let f = |m: usize| -> Real {
                    Real::from_rational(kappa) * Real::from_rational(&q.recip()).powi(m as i64)
                        / pow_rational(m, s)
                };
                if n == 0 {
                    let v = Real::from_i64(2) * f(1) - f(2);
                    Some(v.max(Real::zero()))
                } else {
                    Some(f(n))
                }
            }
            WeightKind::Power { kappa, s } => {
                if n == 0 {
                    Some(if s.is_zero() { Real::from_rational(kappa) } else { Real::zero() })
                } else {
                    Some(Real::from_rational(kappa) * pow_rational(n, s))
                }
            }
            WeightKind::Table { logs } => logs.get(n).cloned(),
            WeightKind::Spliced { start, head, tail } => {
                if n >= *start && n < start + head.len() {
                    Some(head[n - start].clone())
                } else {
                    tail.log_at(n, q)
                }
            }
        }
    }

    fn base(&self) -> &WeightKind {
        match self {
            WeightKind::Spliced { tail, .. } => tail.base(),
            k => k,
        }
    }
}

fn pow_rational(n: usize, s: &Q) -> Real {
    if s.is_integer() {
        Real::from_i64(n as i64).powi(s.to_integer().to_i64().expect("integer exponent"))
    } else {
        Real::from_i64(n as i64).powr(&Real::from_rational(s))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSequence {
    #[serde(flatten)]
    kind: WeightKind,
    #[serde(with = "serde_q")]
    p: Q,
    #[serde(with = "serde_q")]
    q: Q,
    /// Index of `M_0` in the unshifted sequence.
    offset: usize,
    horizon: usize,
    /// `log M_n` for `n = 0..=horizon` (relative to `offset`).
    prefix: Vec<Real>,
}

impl WeightSequence {
    fn build(kind: WeightKind, p: Q, offset: usize, horizon: usize, require_ge_one: bool) -> Result<Self> {
        if !p.is_positive() || p >= Q::one() {
            return Err(Error::Domain(format!("exponent p must lie in (0, 1), got {}", format_q(&p))));
        }
        let q = Q::one() - &p;
        let mut prefix = Vec::with_capacity(horizon + 1);
        for n in 0..=horizon {
            match kind.log_at(offset + n, &q) {
                Some(v) => prefix.push(v),
                None => {
                    return Err(Error::Precondition(format!(
                        "table has no entry at index {} (horizon {horizon})",
                        offset + n
                    )))
                }
            }
        }
        if require_ge_one {
            if let Some((n, _)) = prefix.iter().enumerate().find(|(_, v)| v.is_negative()) {
                return Err(Error::Domain(format!("M_{n} < 1 violates the weight normalization")));
            }
        }
        Ok(WeightSequence { kind, p, q, offset, horizon, prefix })
    }

    pub fn geometric_exponential(kappa: Q, p: Q, horizon: usize) -> Result<Self> {
        if kappa.is_negative() {
            return Err(Error::Domain("κ must be nonnegative".into()));
        }
        Self::build(WeightKind::GeometricExponential { kappa }, p, 0, horizon, true)
    }

    pub fn tempered(kappa: Q, s: Q, p: Q, horizon: usize) -> Result<Self> {
        if kappa.is_negative() {
            return Err(Error::Domain("κ must be nonnegative".into()));
        }
        Self::build(WeightKind::Tempered { kappa, s }, p, 0, horizon, true)
    }

    pub fn power(kappa: Q, s: Q, p: Q, horizon: usize) -> Result<Self> {
        if kappa.is_negative() || s.is_negative() {
            return Err(Error::Domain("κ and s must be nonnegative".into()));
        }
        Self::build(WeightKind::Power { kappa, s }, p, 0, horizon, true)
    }

    /// Explicit table of values `M_n`.
    pub fn table(values: &[Real], p: Q) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty weight table".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_positive()) {
            return Err(Error::Domain(format!("weights must be positive, got {v}")));
        }
        let logs: Vec<Real> = values.iter().map(|v| v.ln()).collect();
        let h = logs.len() - 1;
        Self::build(WeightKind::Table { logs }, p, 0, h, true)
    }

    pub fn table_from_logs(logs: Vec<Real>, p: Q) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::Domain("empty weight table".into()));
        }
        let h = logs.len() - 1;
        Self::build(WeightKind::Table { logs }, p, 0, h, true)
    }

    /// Same closed form evaluated to a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let ge_one = !matches!(self.kind, WeightKind::Spliced { .. });
        Self::build(self.kind.clone(), self.p.clone(), self.offset, horizon, ge_one)
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn p(&self) -> &Q {
        &self.p
    }

    pub fn q(&self) -> &Q {
        &self.q
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn prefix(&self) -> &[Real] {
        &self.prefix
    }

    /// `log M_n`, from the prefix or, past the horizon, the closed form.
    pub fn log_m(&self, n: usize) -> Option<Real> {
        if n <= self.horizon {
            Some(self.prefix[n].clone())
        } else {
            self.kind.log_at(self.offset + n, &self.q)
        }
    }

    pub fn log_m_unchecked(&self, n: usize) -> Real {
        self.log_m(n).unwrap_or_else(|| panic!("no value for log M_{n}"))
    }

    /// `M_n` (may overflow to infinity for large `n`).
    pub fn m(&self, n: usize) -> Option<Real> {
        self.log_m(n).map(|l| l.exp())
    }

    pub fn is_table(&self) -> bool {
        self.kind.is_table()
    }
}

/// The shifted sequence `M_i = {M_{i+n}}`.
pub fn shift(m: &WeightSequence, i: usize) -> Result<WeightSequence> {
    if i > m.horizon {
        return Err(Error::Precondition(format!("shift {i} exceeds the prefix horizon {}", m.horizon)));
    }
    Ok(WeightSequence {
        kind: m.kind.clone(),
        p: m.p.clone(),
        q: m.q.clone(),
        offset: m.offset + i,
        horizon: m.horizon - i,
        prefix: m.prefix[i..].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuVerdict {
    Finite,
    Infinite,
    HorizonUndetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct MuReport {
    /// `Σ_{k≤n} q^k log M_k` for `n = 0..=horizon`.
    pub partial_sums: Vec<Real>,
    pub verdict: MuVerdict,
}

fn analytic_mu(kind: &WeightKind) -> MuVerdict {
    match kind.base() {
        WeightKind::GeometricExponential { kappa } => {
            if kappa.is_zero() {
                MuVerdict::Finite
            } else {
                MuVerdict::Infinite
            }
        }
        WeightKind::Tempered { kappa, s } => {
            if kappa.is_zero() || s > &Q::one() {
                MuVerdict::Finite
            } else {
                MuVerdict::Infinite
            }
        }
        WeightKind::Power { .. } => MuVerdict::Finite,
        _ => MuVerdict::HorizonUndetermined,
    }
}

fn qlog_terms(m: &WeightSequence, horizon: usize) -> Result<Vec<Real>> {
    let qr = Real::from_rational(&m.q);
    let mut out = Vec::with_capacity(horizon + 1);
    let mut qn = Real::one();
    for n in 0..=horizon {
        let l = m.log_m(n).ok_or_else(|| {
            Error::Precondition(format!("no value for log M_{n}; table horizon is {}", m.horizon))
        })?;
        out.push(&qn * &l);
        qn = qn * &qr;
    }
    Ok(out)
}

/// Partial sums of `q^n log M_n` and the analytic verdict on `μ_M`.
pub fn mu_classify(m: &WeightSequence, horizon: usize) -> Result<MuReport> {
    if horizon < 1 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    let terms = qlog_terms(m, horizon)?;
    let mut acc = Real::zero();
    let partial_sums = terms
        .into_iter()
        .map(|t| {
            acc = &acc + &t;
            acc.clone()
        })
        .collect();
    Ok(MuReport { partial_sums, verdict: analytic_mu(&m.kind) })
}

/// `log M_{n-1} + log M_{n+1} ≥ 2 log M_n` on every interior prefix index.
pub fn is_log_convex(m: &WeightSequence) -> Result<bool> {
    if m.prefix.len() < 3 {
        return Err(Error::Precondition("log-convexity needs at least three values".into()));
    }
    Ok(convex_violation(&m.prefix).is_none())
}

/// First interior index where the second difference is negative beyond
/// the comparison tolerance.
pub(crate) fn convex_violation(v: &[Real]) -> Option<usize> {
    let tol = Real::from_f64(COMPARE_REL_TOL);
    (1..v.len().saturating_sub(1)).find(|&n| {
        let lhs = &v[n - 1] + &v[n + 1];
        let rhs = Real::from_i64(2) * &v[n];
        let scale = lhs.abs().max(rhs.abs()).max(Real::one());
        lhs - rhs < -(scale * &tol)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

fn trend(v: &[Real]) -> Trend {
    if v.len() < 2 {
        return Trend::Constant;
    }
    let (mut up, mut down) = (false, false);
    for w in v.windows(2) {
        if w[1].approx_eq(&w[0]) {
            continue;
        }
        if w[1] > w[0] {
            up = true;
        } else {
            down = true;
        }
    }
    match (up, down) {
        (false, false) => Trend::Constant,
        (true, false) => Trend::Increasing,
        (false, true) => Trend::Decreasing,
        _ => Trend::Mixed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularityBranch {
    Branch1,
    Branch2,
    NotPRegular,
    Undetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct QlogLimit {
    /// Closed-form limit of `q^n log M_n`, if the catalog decides it.
    pub analytic: Option<String>,
    /// Last evaluated term.
    pub estimate: Real,
    pub trend: Trend,
    pub liminf_positive: Option<bool>,
    pub limit_exists: Option<bool>,
    /// The weaker alternative to the existence of the limit.
    pub limsup_finite: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperQuadratic {
    /// `log M_n / n^2` for `n = 1..=horizon`.
    pub ratios: Vec<Real>,
    pub trend: Trend,
    pub analytic_divergent: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub kind: &'static str,
    #[serde(with = "serde_q")]
    pub p: Q,
    pub horizon: usize,
    pub log_convex: bool,
    pub mu_partial_sums: Vec<Real>,
    pub mu_verdict: MuVerdict,
    pub qlog_terms: Vec<Real>,
    pub qlog_limit: QlogLimit,
    pub superquadratic: SuperQuadratic,
    pub regularity_branch: RegularityBranch,
}

struct Analytic {
    limit: Option<String>,
    liminf_positive: Option<bool>,
    limit_exists: Option<bool>,
    limsup_finite: Option<bool>,
    superquadratic: Option<bool>,
}

fn analytic_facts(m: &WeightSequence) -> Analytic {
    match m.kind.base() {
        WeightKind::GeometricExponential { kappa } => {
            // q^n log M_{n+i} = κ q^{-i}
            let lim = kappa * crate::rational::pow_i(&m.q, -(m.offset as i32));
            Analytic {
                limit: Some(format_q(&lim)),
                liminf_positive: Some(kappa.is_positive()),
                limit_exists: Some(true),
                limsup_finite: Some(true),
                superquadratic: Some(kappa.is_positive()),
            }
        }
        WeightKind::Tempered { kappa, s } => {
            if kappa.is_zero() {
                return Analytic {
                    limit: Some("0".into()),
                    liminf_positive: Some(false),
                    limit_exists: Some(true),
                    limsup_finite: Some(true),
                    superquadratic: Some(false),
                };
            }
            let (limit, liminf_pos) = if s.is_positive() {
                ("0".to_string(), false)
            } else if s.is_zero() {
                (format_q(&(kappa * crate::rational::pow_i(&m.q, -(m.offset as i32)))), true)
            } else {
                ("+inf".to_string(), true)
            };
            Analytic {
                limsup_finite: Some(!s.is_negative()),
                limit: Some(limit),
                liminf_positive: Some(liminf_pos),
                limit_exists: Some(true),
                superquadratic: Some(true),
            }
        }
        WeightKind::Power { kappa, s } => Analytic {
            limit: Some("0".into()),
            liminf_positive: Some(false),
            limit_exists: Some(true),
            limsup_finite: Some(true),
            superquadratic: Some(kappa.is_positive() && s > &Q::from_integer(2.into())),
        },
        _ => Analytic {
            limit: None,
            liminf_positive: None,
            limit_exists: None,
            limsup_finite: None,
            superquadratic: None,
        },
    }
}

/// μ verdict, `q^n log M_n` behaviour, super-quadratic growth and the
/// resulting regularity branch.
pub fn p_regularity_report(m: &WeightSequence, horizon: usize) -> Result<RegularityReport> {
    if horizon < 3 {
        return Err(Error::Precondition("regularity report needs horizon ≥ 3".into()));
    }
    let mu = mu_classify(m, horizon)?;
    let terms = qlog_terms(m, horizon)?;
    let logs: Vec<Real> = (0..=horizon).map(|n| m.log_m_unchecked(n)).collect();
    let log_convex = convex_violation(&logs).is_none();
    let facts = analytic_facts(m);
    let half = terms.len() / 2;
    let qlog_limit = QlogLimit {
        analytic: facts.limit.clone(),
        estimate: terms.last().unwrap().clone(),
        trend: trend(&terms[half..]),
        liminf_positive: facts.liminf_positive,
        limit_exists: facts.limit_exists,
        limsup_finite: facts.limsup_finite,
    };
    let ratios: Vec<Real> = (1..=horizon).map(|n| &logs[n] / Real::from_i64((n * n) as i64)).collect();
    let superquadratic =
        SuperQuadratic { trend: trend(&ratios[ratios.len() / 2..]), ratios, analytic_divergent: facts.superquadratic };
    let branch = if m.is_table() {
        RegularityBranch::Undetermined
    } else if facts.liminf_positive == Some(true) {
        RegularityBranch::Branch1
    } else if log_convex && facts.limit_exists == Some(true) && facts.superquadratic == Some(true) {
        RegularityBranch::Branch2
    } else if facts.limit_exists.is_none() || facts.superquadratic.is_none() {
        RegularityBranch::Undetermined
    } else {
        RegularityBranch::NotPRegular
    };
    Ok(RegularityReport {
        kind: m.kind.tag(),
        p: m.p.clone(),
        horizon,
        log_convex,
        mu_partial_sums: mu.partial_sums,
        mu_verdict: mu.verdict,
        qlog_terms: terms,
        qlog_limit,
        superquadratic,
        regularity_branch: branch,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperQuadraticReport {
    /// Smallest `n0` with `e^{P(n)} / M_n^p < ε` on `[n0, horizon]`.
    pub n0: Option<usize>,
    /// The ratio decreases monotonically on `[n0, horizon]`.
    pub monotone_decreasing: bool,
    /// `P(n) - p log M_n` for `n = 0..=horizon`.
    pub log_ratios: Vec<Real>,
    pub log_eps: Real,
    pub analytic_superquadratic: Option<bool>,
}

impl SuperQuadraticReport {
    pub fn found(&self) -> bool {
        self.n0.is_some()
    }
}

pub fn super_quadratic_check(m: &WeightSequence, poly: &GrowthPoly, eps: &Q, horizon: usize) -> Result<SuperQuadraticReport> {
    if !eps.is_positive() {
        return Err(Error::Domain("ε must be positive".into()));
    }
    let pr = Real::from_rational(&m.p);
    let mut log_ratios = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        let l = m
            .log_m(n)
            .ok_or_else(|| Error::Precondition(format!("no value for log M_{n}; table horizon is {}", m.horizon)))?;
        log_ratios.push(poly.eval_real(n as u64) - &pr * l);
    }
    let log_eps = Real::from_rational(eps).ln();
    let mut n0 = None;
    for n in (0..=horizon).rev() {
        if log_ratios[n] < log_eps {
            n0 = Some(n);
        } else {
            break;
        }
    }
    let monotone_decreasing = match n0 {
        Some(n0) => log_ratios[n0..].windows(2).all(|w| w[1] < w[0]),
        None => false,
    };
    Ok(SuperQuadraticReport {
        n0,
        monotone_decreasing,
        log_ratios,
        log_eps,
        analytic_superquadratic: analytic_facts(m).superquadratic,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorantChecks {
    pub dominated: bool,
    pub log_convex: bool,
    pub bound: bool,
}

impl MinorantChecks {
    pub fn all(&self) -> bool {
        self.dominated && self.log_convex && self.bound
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorantResult {
    pub n: WeightSequence,
    pub n0: usize,
    pub n1: usize,
    /// `max_n e^{P(n)} N_n^q / M_n` over the evaluated range.
    pub bound_margin: Real,
    pub log_bound_margin: Real,
    #[serde(with = "serde_q")]
    pub eps: Q,
    pub poly: GrowthPoly,
    pub checks: MinorantChecks,
}

/// Re-check the three minorant invariants from scratch on `0..=horizon`.
pub fn verify_minorant(n: &WeightSequence, m: &WeightSequence, poly: &GrowthPoly, eps: &Q, horizon: usize) -> MinorantChecks {
    let qr = Real::from_rational(&m.q);
    let tol = Real::from_f64(COMPARE_REL_TOL);
    let log_eps = Real::from_rational(eps).ln();
    let mut dominated = true;
    let mut bound = true;
    let mut logs = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let (Some(ln), Some(lm)) = (n.log_m(k), m.log_m(k)) else {
            return MinorantChecks { dominated: false, log_convex: false, bound: false };
        };
        let scale = lm.abs().max(Real::one());
        if ln > &lm + &(scale * &tol) {
            dominated = false;
        }
        let lb = poly.eval_real(k as u64) + &qr * &ln - &lm;
        if !(lb < log_eps) {
            bound = false;
        }
        logs.push(ln);
    }
    MinorantChecks { dominated, log_convex: convex_violation(&logs).is_none(), bound }
}

/// Greatest convex minorant of `min(log M_n, cap_n)` where `cap_n` encodes
/// `e^{P(n)} N_n^q / M_n < ε'`, with `N_n = M_n` from the splice index on.
pub fn build_minorant(m: &WeightSequence, poly: &GrowthPoly, eps: &Q, horizon: usize) -> Result<MinorantResult> {
    let report = p_regularity_report(m, horizon)?;
    match report.regularity_branch {
        RegularityBranch::Branch1 | RegularityBranch::Branch2 => {}
        b => {
            return Err(Error::Precondition(format!("minorant needs a p-regular sequence, report says {b:?}")));
        }
    }
    let sq = super_quadratic_check(m, poly, eps, horizon)?;
    let n0 = sq.n0.ok_or_else(|| {
        Error::Certification(format!("no n0 ≤ {horizon} with e^P(n)/M_n^p < ε; enlarge the horizon"))
    })?;
    // Strict slack so that rounding in the hull cannot touch the bound.
    let eps_strict = eps * (Q::one() - Q::new(1.into(), 1024.into()));
    let log_eps = Real::from_rational(&eps_strict).ln();
    let qr = Real::from_rational(&m.q);
    let logs: Vec<Real> = (0..=horizon).map(|n| m.log_m_unchecked(n)).collect();
    let caps: Vec<Real> = (0..=horizon)
        .map(|n| {
            let cap = (&log_eps + &logs[n] - poly.eval_real(n as u64)) / &qr;
            cap.min(logs[n].clone())
        })
        .collect();
    let hull = lower_hull(&caps);
    let mut n_logs = vec![Real::zero(); horizon + 1];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (&caps[b] - &caps[a]) / Real::from_i64((b - a) as i64);
        for k in a..=b {
            n_logs[k] = &caps[a] + &slope * Real::from_i64((k - a) as i64);
        }
    }
    if hull.len() == 1 {
        n_logs[0] = caps[0].clone();
    }
    // Hull vertices are exact; snap them to remove interpolation rounding.
    for &v in &hull {
        n_logs[v] = caps[v].clone();
    }
    let n1 = (0..=horizon).rev().take_while(|&k| n_logs[k] == logs[k] || n_logs[k].approx_eq(&logs[k])).last();
    let n1 = match n1 {
        Some(n1) if n1 < horizon => n1,
        _ => {
            return Err(Error::Certification(format!(
                "minorant does not rejoin M before the horizon {horizon}; enlarge the horizon"
            )))
        }
    };
    // Chord into n1 must not be steeper than the forward difference of log M.
    if n1 > 0 {
        let chord = &n_logs[n1] - &n_logs[n1 - 1];
        let fwd = &logs[n1 + 1] - &logs[n1];
        if chord > fwd && !chord.approx_eq(&fwd) {
            return Err(Error::Certification(format!("chord slope at n1 = {n1} exceeds the slope of log M")));
        }
    }
    for k in n1..=horizon {
        n_logs[k] = logs[k].clone();
    }
    let kind = WeightKind::Spliced {
        start: m.offset,
        head: n_logs[..n1].to_vec(),
        tail: Box::new(m.kind.clone()),
    };
    let n_seq = WeightSequence {
        kind,
        p: m.p.clone(),
        q: m.q.clone(),
        offset: m.offset,
        horizon,
        prefix: n_logs.clone(),
    };
    let log_bound_margin = (0..=horizon)
        .map(|k| poly.eval_real(k as u64) + &qr * &n_logs[k] - &logs[k])
        .reduce(|a, b| a.max(b))
        .unwrap();
    let checks = verify_minorant(&n_seq, m, poly, eps, horizon);
    Ok(MinorantResult {
        n: n_seq,
        n0,
        n1,
        bound_margin: log_bound_margin.exp(),
        log_bound_margin,
        eps: eps.clone(),
        poly: poly.clone(),
        checks,
    })
}

/// Indices of the lower convex hull of `(k, v[k])`.
fn lower_hull(v: &[Real]) -> Vec<usize> {
    let mut h: Vec<usize> = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        while h.len() >= 2 {
            let a = h[h.len() - 2];
            let b = h[h.len() - 1];
            // Remove b when it lies on or above the chord from a to k.
            let lhs = (&v[b] - &v[a]) * Real::from_i64((k - a) as i64);
            let rhs = (&v[k] - &v[a]) * Real::from_i64((b - a) as i64);
            if lhs >= rhs {
                h.pop();
            } else {
                break;
            }
        }
        h.push(k);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn half() -> Q {
        q(1, 2)
    }

    #[test]
    fn geometric_partial_sums_count_terms() {
        let m = WeightSequence::geometric_exponential(qi(1), half(), 10).unwrap();
        let r = mu_classify(&m, 10).unwrap();
        for (n, s) in r.partial_sums.iter().enumerate() {
            assert!(s.approx_eq(&Real::from_i64(n as i64 + 1)));
        }
        assert_eq!(r.verdict, MuVerdict::Infinite);
    }

    #[test]
    fn linear_log_weights_have_finite_mu() {
        // log M_n = n: power kind with κ = 1, s = 1; Σ n 2^{-n} = 2.
        let m = WeightSequence::power(qi(1), qi(1), half(), 200).unwrap();
        let r = mu_classify(&m, 200).unwrap();
        assert!((r.partial_sums.last().unwrap().to_f64() - 2.0).abs() < 1e-12);
        assert_eq!(r.verdict, MuVerdict::Finite);
        let one = WeightSequence::geometric_exponential(qi(0), half(), 5).unwrap();
        let r = mu_classify(&one, 5).unwrap();
        assert!(r.partial_sums.iter().all(|s| s.is_zero()));
        assert_eq!(r.verdict, MuVerdict::Finite);
    }

    #[test]
    fn tables_are_horizon_undetermined() {
        let t = WeightSequence::table(&[Real::from_i64(1), Real::from_i64(4), Real::from_i64(8)], half()).unwrap();
        assert_eq!(mu_classify(&t, 2).unwrap().verdict, MuVerdict::HorizonUndetermined);
        assert!(!is_log_convex(&t).unwrap());
        assert!(WeightSequence::table(&[Real::from_f64(0.5)], half()).is_err());
    }

    #[test]
    fn convexity_examples() {
        assert!(is_log_convex(&WeightSequence::power(qi(1), qi(2), half(), 20).unwrap()).unwrap());
        assert!(is_log_convex(&WeightSequence::geometric_exponential(qi(1), half(), 20).unwrap()).unwrap());
        let short = WeightSequence::power(qi(1), qi(2), half(), 1).unwrap();
        assert!(is_log_convex(&short).is_err());
    }

    #[test]
    fn regularity_branches_of_catalog_forms() {
        let g = WeightSequence::geometric_exponential(qi(1), half(), 30).unwrap();
        assert_eq!(p_regularity_report(&g, 30).unwrap().regularity_branch, RegularityBranch::Branch1);
        let t = WeightSequence::tempered(qi(1), qi(1), half(), 30).unwrap();
        let r = p_regularity_report(&t, 30).unwrap();
        assert_eq!(r.regularity_branch, RegularityBranch::Branch2);
        assert_eq!(r.mu_verdict, MuVerdict::Infinite);
        // q^n log M_n = 1/n
        assert!(r.qlog_terms[7].approx_eq(&(Real::one() / Real::from_i64(7))));
        let pw = WeightSequence::power(qi(1), qi(2), half(), 30).unwrap();
        let r = p_regularity_report(&pw, 30).unwrap();
        assert_eq!(r.regularity_branch, RegularityBranch::NotPRegular);
        assert_eq!(r.mu_verdict, MuVerdict::Finite);
    }

    #[test]
    fn shifts_compose_and_reindex() {
        let m = WeightSequence::geometric_exponential(qi(1), half(), 20).unwrap();
        let s0 = shift(&m, 0).unwrap();
        assert_eq!(s0.prefix(), m.prefix());
        let s1 = shift(&m, 1).unwrap();
        for n in 0..10 {
            assert!(s1.log_m_unchecked(n).approx_eq(&Real::from_i64(1 << (n + 1))));
        }
        let s11 = shift(&s1, 1).unwrap();
        let s2 = shift(&m, 2).unwrap();
        assert_eq!(s11.prefix(), s2.prefix());
        assert!(shift(&m, 21).is_err());
    }

    #[test]
    fn super_quadratic_examples() {
        let t = WeightSequence::tempered(qi(1), qi(1), half(), 64).unwrap();
        let sq = super_quadratic_check(&t, &GrowthPoly(vec![qi(0), qi(0), qi(1)]), &q(1, 1000), 64).unwrap();
        assert_eq!(sq.n0, Some(12));
        assert!(sq.monotone_decreasing);
        let g = WeightSequence::geometric_exponential(qi(1), half(), 30).unwrap();
        let sq = super_quadratic_check(&g, &GrowthPoly(vec![]), &qi(1), 30).unwrap();
        assert_eq!(sq.n0, Some(0));
        let pw = WeightSequence::power(qi(1), qi(2), half(), 30).unwrap();
        let sq = super_quadratic_check(&pw, &GrowthPoly(vec![qi(0), qi(0), qi(1)]), &q(1, 1000), 30).unwrap();
        assert_eq!(sq.n0, None);
    }

    #[test]
    fn minorant_of_tempered_weights_satisfies_invariants() {
        let t = WeightSequence::tempered(qi(1), qi(1), half(), 64).unwrap();
        let poly = GrowthPoly(vec![qi(0), qi(0), qi(1)]);
        let r = build_minorant(&t, &poly, &q(1, 100), 64).unwrap();
        assert!(r.checks.all());
        assert!(r.bound_margin < Real::from_f64(0.01));
        assert!(r.n1 >= 1 && r.n1 < 64);
        // Past the horizon the minorant is M itself.
        assert_eq!(r.n.log_m(80), t.log_m(80));
    }

    #[test]
    fn minorant_equals_m_when_bound_already_holds() {
        let g = WeightSequence::geometric_exponential(qi(1), half(), 20).unwrap();
        let r = build_minorant(&g, &GrowthPoly(vec![]), &qi(2), 20).unwrap();
        assert_eq!(r.n1, 0);
        assert_eq!(r.n.prefix(), g.prefix());
    }

    #[test]
    fn minorant_rejects_non_regular_weights() {
        let pw = WeightSequence::power(qi(1), qi(2), half(), 30).unwrap();
        let e = build_minorant(&pw, &GrowthPoly::default_quadratic(), &q(1, 100), 30).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }
}
