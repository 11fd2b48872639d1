//! Truncated elements, the maps α and δ, the β-lift of step functions, the
//! primitive lift and the splitting `u ↦ (αu, δu)` with its inverse.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::mollify::{build_mollifier_with, Mollifier};
use crate::piecewise::{lp_quasinorm, PiecewisePolynomial, DEFAULT_TOL};
use crate::rational::{format_q, log2_floor, serde_q, serde_q_vec, Q};
use crate::real::Real;
use crate::tower::Verdict;
use crate::weights::{shift, WeightSequence};
use crate::{Error, GrowthPoly, Result};

/// Default truncation level of M-norms in pipeline checks.
pub const DEFAULT_TRUNCATION: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    #[serde(with = "serde_q")]
    pub a: Q,
    #[serde(with = "serde_q")]
    pub b: Q,
    #[serde(with = "serde_q")]
    pub c: Q,
}

/// `Σ c_k χ_[a_k, b_k]` with pairwise disjoint intervals.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct StepFunction {
    steps: Vec<Step>,
}

impl StepFunction {
    pub fn new(steps: Vec<(Q, Q, Q)>) -> Result<Self> {
        let mut steps: Vec<Step> = steps.into_iter().map(|(a, b, c)| Step { a, b, c }).collect();
        if let Some(s) = steps.iter().find(|s| s.a >= s.b) {
            return Err(Error::Domain(format!("empty step interval [{}, {}]", format_q(&s.a), format_q(&s.b))));
        }
        steps.sort_by(|x, y| x.a.cmp(&y.a));
        if steps.windows(2).any(|w| w[0].b > w[1].a) {
            return Err(Error::Domain("step intervals overlap".into()));
        }
        steps.retain(|s| !s.c.is_zero());
        Ok(StepFunction { steps })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_zero(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_piecewise(&self) -> PiecewisePolynomial {
        let jumps = self.jumps();
        let mut breaks = Vec::with_capacity(jumps.len());
        let mut pieces = Vec::with_capacity(jumps.len());
        let mut level = Q::zero();
        for (x, d) in &jumps {
            if !breaks.is_empty() {
                pieces.push(crate::poly::Poly::constant(level.clone()));
            }
            level += d;
            breaks.push(x.clone());
        }
        PiecewisePolynomial::new(breaks, pieces).expect("sorted jump locations")
    }

    /// Jump locations and sizes, coinciding jumps merged.
    pub fn jumps(&self) -> Vec<(Q, Q)> {
        let mut out: Vec<(Q, Q)> = Vec::with_capacity(2 * self.steps.len());
        for s in &self.steps {
            for (x, d) in [(s.a.clone(), s.c.clone()), (s.b.clone(), -&s.c)] {
                match out.last_mut() {
                    Some((lx, ld)) if *lx == x => *ld += d,
                    _ => out.push((x, d)),
                }
            }
        }
        out.retain(|(_, d)| !d.is_zero());
        out
    }

    /// `(Σ |d_i|^p)^{1/p}` over the jump sizes: the factor by which the
    /// derivative of the lift can exceed the mollifier in M-norm.
    pub fn jump_factor(&self, p: &Q) -> f64 {
        let pf = crate::rational::to_f64(p);
        let s: f64 = self.jumps().iter().map(|(_, d)| crate::rational::to_f64(&d.abs()).powf(pf)).sum();
        s.powf(1.0 / pf)
    }

    /// `Σ |d_i|^p`.
    fn jump_mass(&self, p: &Q) -> f64 {
        let pf = crate::rational::to_f64(p);
        self.jumps().iter().map(|(_, d)| crate::rational::to_f64(&d.abs()).powf(pf)).sum()
    }
}

/// Cell-midpoint quantization of `g` on the dyadic grid of step `2^{-m}`.
pub fn quantize(g: &PiecewisePolynomial, m: u32) -> Result<StepFunction> {
    let Some((lo, hi)) = g.support() else {
        return Ok(StepFunction::zero());
    };
    let scale = Q::from_integer(BigInt::one() << m as usize);
    let h = scale.recip();
    let first = (&lo * &scale).floor().to_integer();
    let last = (&hi * &scale).ceil().to_integer();
    let half = Q::new(1.into(), 2.into());
    let mut steps = Vec::new();
    let mut i = first;
    while i < last {
        let a = Q::from_integer(i.clone()) * &h;
        let b = &a + &h;
        let c = g.eval(&(&a + &h * &half));
        steps.push((a, b, c));
        i += 1;
    }
    StepFunction::new(steps)
}

#[derive(Debug, Clone, Serialize)]
pub struct Quantization {
    pub step: StepFunction,
    pub m: u32,
    /// `‖g - step‖_p`.
    pub error: Real,
}

/// Coarsest dyadic quantization with `‖g - Q_m g‖_p ≤ budget`.
pub fn quantize_to_budget(g: &PiecewisePolynomial, p: &Q, budget: f64) -> Result<Quantization> {
    const MAX_LEVEL: u32 = 20;
    for m in 0..=MAX_LEVEL {
        let step = quantize(g, m)?;
        let error = lp_quasinorm(&g.sub(&step.to_piecewise()), p, DEFAULT_TOL)?.value;
        if error.to_f64() <= budget {
            return Ok(Quantization { step, m, error });
        }
    }
    Err(Error::Resource(format!("no dyadic grid up to 2^-{MAX_LEVEL} meets the budget {budget:e}")))
}

/// Truncated M-norm `max_{n ≤ N} ‖f^{(n)}‖_p / M_n`.
#[derive(Debug, Clone, Serialize)]
pub struct MNorm {
    pub ratios: Vec<Real>,
    pub value: Real,
}

pub fn m_norm(f: &PiecewisePolynomial, m: &WeightSequence, p: &Q, n_trunc: usize) -> Result<MNorm> {
    let mut g = f.clone();
    let mut ratios = Vec::with_capacity(n_trunc + 1);
    for n in 0..=n_trunc {
        if n > 0 {
            let (d, jumps) = g.differentiate();
            if !jumps.is_empty() {
                return Err(Error::Domain(format!("derivative of order {n} has point masses")));
            }
            g = d;
        }
        let nv = lp_quasinorm(&g, p, DEFAULT_TOL)?;
        let lm = m.log_m(n).ok_or_else(|| Error::Precondition(format!("no weight at n = {n}")))?;
        ratios.push(if nv.value.is_zero() { Real::zero() } else { (nv.value.ln() - lm).exp() });
    }
    let value = ratios.iter().cloned().fold(Real::zero(), Real::max);
    Ok(MNorm { ratios, value })
}

/// A finite Cauchy sequence standing in for a point of the completion.
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedElement {
    #[serde(skip)]
    pub reps: Vec<PiecewisePolynomial>,
    pub weight: WeightSequence,
    #[serde(with = "serde_q")]
    pub p: Q,
    pub n_trunc: usize,
    /// `‖u_j‖_{M,≤N}`.
    pub rep_norms: Vec<MNorm>,
    /// `‖u_j - u_{j+1}‖_{M,≤N}`.
    pub norm_trace: Vec<Real>,
    /// Least-squares slope of `ln norm_trace` against `j`.
    pub cauchy_rate: Option<f64>,
    pub piece_counts: Vec<usize>,
}

impl TruncatedElement {
    pub fn new(reps: Vec<PiecewisePolynomial>, weight: WeightSequence, p: Q, n_trunc: usize) -> Result<Self> {
        if reps.iter().any(|r| !r.is_compact()) {
            return Err(Error::Domain("representatives must be compactly supported".into()));
        }
        let rep_norms = reps.iter().map(|r| m_norm(r, &weight, &p, n_trunc)).collect::<Result<Vec<_>>>()?;
        let norm_trace = reps
            .windows(2)
            .map(|w| m_norm(&w[0].sub(&w[1]), &weight, &p, n_trunc).map(|n| n.value))
            .collect::<Result<Vec<_>>>()?;
        let cauchy_rate = fit_rate(&norm_trace);
        let piece_counts = reps.iter().map(|r| r.num_pieces()).collect();
        Ok(TruncatedElement { reps, weight, p, n_trunc, rep_norms, norm_trace, cauchy_rate, piece_counts })
    }

    pub fn zero(weight: WeightSequence, p: Q, n_trunc: usize, len: usize) -> Result<Self> {
        Self::new(vec![PiecewisePolynomial::zero(); len], weight, p, n_trunc)
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn last(&self) -> Option<&PiecewisePolynomial> {
        self.reps.last()
    }

    pub fn norms(&self) -> Vec<Real> {
        self.rep_norms.iter().map(|n| n.value.clone()).collect()
    }
}

fn fit_rate(trace: &[Real]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_positive())
        .map(|(i, v)| (i as f64, v.ln().to_f64()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

pub fn strictly_decreasing(v: &[Real]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaReport {
    #[serde(skip)]
    pub limit: PiecewisePolynomial,
    /// `‖u_j - u_J‖_p`.
    pub lp_to_final: Vec<Real>,
    pub rate: Option<f64>,
    pub converged: bool,
    pub verdict: Verdict,
}

/// The final representative as the L^p limit; inconclusive unless the last
/// step of the norm trace is below `tol`.
pub fn alpha(e: &TruncatedElement, tol: f64) -> Result<AlphaReport> {
    let limit = e.last().cloned().unwrap_or_else(PiecewisePolynomial::zero);
    let lp_to_final = e
        .reps
        .iter()
        .map(|r| lp_quasinorm(&r.sub(&limit), &e.p, DEFAULT_TOL).map(|n| n.value))
        .collect::<Result<Vec<_>>>()?;
    let head = &lp_to_final[..lp_to_final.len().saturating_sub(1)];
    let rate = fit_rate(head);
    let converged = e.norm_trace.last().is_none_or(|t| t.to_f64() < tol);
    let verdict = if converged { Verdict::Pass } else { Verdict::Inconclusive };
    Ok(AlphaReport { limit, lp_to_final, rate, converged, verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub element: TruncatedElement,
    /// `trace_new(j) ≤ trace_old(j)` within quadrature tolerance for all `j`.
    pub contraction: bool,
}

/// Differentiate every representative; the result lives over `M_1` at
/// truncation `N - 1`.
pub fn delta(e: &TruncatedElement) -> Result<DeltaReport> {
    if e.n_trunc == 0 {
        return Err(Error::Precondition("delta needs truncation level at least 1".into()));
    }
    let mut reps = Vec::with_capacity(e.len());
    for r in &e.reps {
        let (d, jumps) = r.differentiate();
        if !jumps.is_empty() {
            return Err(Error::Domain("representative has jumps; its derivative is not a function".into()));
        }
        reps.push(d);
    }
    let weight = shift(&e.weight, 1)?;
    let element = TruncatedElement::new(reps, weight, e.p.clone(), e.n_trunc - 1)?;
    let slack = Real::from_f64(1.0 + 4.0 * DEFAULT_TOL);
    let contraction = element.norm_trace.iter().zip(&e.norm_trace).all(|(n, o)| *n <= o * &slack);
    Ok(DeltaReport { element, contraction })
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub alpha_part: AlphaReport,
    pub delta_part: TruncatedElement,
    /// `|‖u_j‖_{M,≤N} - max(‖u_j‖_p/M_0, ‖u_j'‖_{M_1,≤N-1})|` per `j`.
    pub residuals: Vec<Real>,
    pub norm_identity_residual: Real,
}

pub fn phi_split(e: &TruncatedElement, tol: f64) -> Result<SplitReport> {
    let alpha_part = alpha(e, tol)?;
    let delta_part = delta(e)?.element;
    let lm0 = e.weight.log_m(0).ok_or_else(|| Error::Precondition("no weight at n = 0".into()))?;
    let residuals: Vec<Real> = e
        .reps
        .iter()
        .zip(&e.rep_norms)
        .zip(&delta_part.rep_norms)
        .map(|((r, full), d)| {
            let lp = lp_quasinorm(r, &e.p, DEFAULT_TOL)?.value;
            let zeroth = if lp.is_zero() { Real::zero() } else { (lp.ln() - &lm0).exp() };
            Ok((&full.value - zeroth.max(d.value.clone())).abs())
        })
        .collect::<Result<_>>()?;
    let norm_identity_residual = residuals.iter().cloned().fold(Real::zero(), Real::max);
    Ok(SplitReport { alpha_part, delta_part, residuals, norm_identity_residual })
}

/// Pipeline state: the weights `M`, `M_1 = shift(M, 1)` and a cache of
/// mollifiers for `M_1` keyed by dyadic tolerance.
pub struct Context {
    pub m: WeightSequence,
    pub m1: WeightSequence,
    pub p: Q,
    pub n_trunc: usize,
    cache: Mutex<BTreeMap<i64, Arc<Mollifier>>>,
}

impl Context {
    pub fn new(m: &WeightSequence, n_trunc: usize) -> Result<Self> {
        if n_trunc > crate::tower::MAX_DEPTH {
            return Err(Error::Resource(format!(
                "truncation {n_trunc} needs mollifiers deeper than {}",
                crate::tower::MAX_DEPTH
            )));
        }
        let m1 = shift(m, 1)?;
        Ok(Context { m: m.clone(), m1, p: m.p().clone(), n_trunc, cache: Mutex::new(BTreeMap::new()) })
    }

    /// A mollifier for `M_1` with tolerance the largest `2^{-k} ≤ eps`,
    /// realized at depth `N` (enough for every truncated norm taken here).
    pub fn mollifier(&self, eps: &Q) -> Result<(Q, Arc<Mollifier>)> {
        if !eps.is_positive() {
            return Err(Error::Domain("mollifier tolerance must be positive".into()));
        }
        let e = log2_floor(eps).expect("positive");
        let dyadic = pow2(e);
        if let Some(m) = self.cache.lock().unwrap().get(&e) {
            return Ok((dyadic, m.clone()));
        }
        let depth = self.n_trunc.max(1);
        let m = Arc::new(build_mollifier_with(&self.m1, &self.p, &dyadic, &GrowthPoly::default_quadratic(), depth)?);
        self.cache.lock().unwrap().insert(e, m.clone());
        Ok((dyadic, m))
    }
}

fn pow2(e: i64) -> Q {
    if e >= 0 {
        Q::from_integer(BigInt::one() << e as usize)
    } else {
        Q::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// Rational `x ≥ 0` below the `f64` value `v`, with a relative safety margin.
fn rational_below(v: f64) -> Q {
    BigRational::from_float(v * (1.0 - 1e-9)).unwrap_or_else(Q::zero)
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaStage {
    #[serde(with = "serde_q")]
    pub eps: Q,
    /// Dyadic tolerance of the mollifier actually used.
    #[serde(with = "serde_q")]
    pub mollifier_eps: Q,
    #[serde(with = "serde_q")]
    pub support_length: Q,
    pub jump_factor: f64,
    #[serde(skip)]
    pub u: PiecewisePolynomial,
    /// `‖u - f‖_p`.
    pub lp_error: Real,
    /// `(Σ |d_i|^p · support)^{1/p}` from the boundary strips.
    pub strip_bound: Real,
    /// `‖u'‖_{M_1,≤N}`.
    pub deriv_norm: MNorm,
}

/// `v ∗ f` through `Σ_i d_i V(· - x_i)` with `V` the primitive of `v`.
pub fn lift_with(f: &StepFunction, v: &PiecewisePolynomial) -> Result<PiecewisePolynomial> {
    let jumps = f.jumps();
    if jumps.is_empty() {
        return Ok(PiecewisePolynomial::zero());
    }
    let big_v = v.antiderivative()?;
    let coeffs: Vec<Q> = jumps.iter().map(|(_, d)| d.clone()).collect();
    let fs: Vec<PiecewisePolynomial> = jumps.iter().map(|(x, _)| big_v.translate(x)).collect();
    PiecewisePolynomial::linear_combine(&coeffs, &fs)
}

/// One β-lift stage: mollify `f` with tolerance `eps` on the derivative.
pub fn beta_stage(f: &StepFunction, ctx: &Context, eps: &Q) -> Result<BetaStage> {
    let p = &ctx.p;
    let jump_factor = f.jump_factor(p);
    let scaled = if f.is_zero() { eps.clone() } else { eps * rational_below(1.0 / jump_factor) };
    let (mollifier_eps, mol) = ctx.mollifier(&scaled).map_err(|e| e.at("mollifier"))?;
    let u = lift_with(f, mol.realization())?;
    let lp_error = lp_quasinorm(&u.sub(&f.to_piecewise()), p, DEFAULT_TOL)?.value;
    let support_length = mol.certificate.support_length.clone();
    let pf = crate::rational::to_f64(p);
    let strip = (f.jump_mass(p) * crate::rational::to_f64(&support_length)).powf(1.0 / pf);
    let deriv_norm = m_norm(&u.differentiate().0, &ctx.m1, p, ctx.n_trunc)?;
    Ok(BetaStage {
        eps: eps.clone(),
        mollifier_eps,
        support_length,
        jump_factor,
        u,
        lp_error,
        strip_bound: Real::from_f64(strip),
        deriv_norm,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaStepReport {
    pub f: StepFunction,
    pub stages: Vec<BetaStage>,
    pub element: TruncatedElement,
    pub lp_errors: Vec<Real>,
    pub deriv_norms: Vec<Real>,
    pub lp_decreasing: bool,
    pub deriv_decreasing: bool,
    /// Every measured error lies below its boundary-strip bound.
    pub strip_bound_ok: bool,
    pub verdict: Verdict,
}

pub fn validate_schedule(schedule: &[Q]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Domain("empty tolerance schedule".into()));
    }
    if schedule.iter().any(|e| !e.is_positive()) {
        return Err(Error::Domain("schedule tolerances must be positive".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// β-lift of a step function along a tolerance schedule.
pub fn beta_step(f: &StepFunction, ctx: &Context, schedule: &[Q]) -> Result<BetaStepReport> {
    validate_schedule(schedule)?;
    let stages = schedule.iter().map(|e| beta_stage(f, ctx, e)).collect::<Result<Vec<_>>>()?;
    let reps = stages.iter().map(|s| s.u.clone()).collect();
    let element = TruncatedElement::new(reps, ctx.m.clone(), ctx.p.clone(), ctx.n_trunc)?;
    let lp_errors: Vec<Real> = stages.iter().map(|s| s.lp_error.clone()).collect();
    let deriv_norms: Vec<Real> = stages.iter().map(|s| s.deriv_norm.value.clone()).collect();
    let slack = Real::from_f64(1.0 + 4.0 * DEFAULT_TOL);
    let strip_bound_ok = stages.iter().all(|s| s.lp_error <= &s.strip_bound * &slack);
    let trivial = f.is_zero();
    let lp_decreasing = trivial || strictly_decreasing(&lp_errors);
    let deriv_decreasing = trivial || strictly_decreasing(&deriv_norms);
    let below = stages.iter().all(|s| s.deriv_norm.value < Real::from_rational(&s.eps));
    let verdict = if strip_bound_ok && below && lp_decreasing && deriv_decreasing { Verdict::Pass } else { Verdict::Fail };
    Ok(BetaStepReport {
        f: f.clone(),
        stages,
        element,
        lp_errors,
        deriv_norms,
        lp_decreasing,
        deriv_decreasing,
        strip_bound_ok,
        verdict,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainCheck {
    pub j: usize,
    pub k: usize,
    /// `‖v_j - v_k‖_p^p`.
    pub lhs: Real,
    /// `‖v_j - f_j‖_p^p + ‖f_j - f_k‖_p^p + ‖v_k - f_k‖_p^p`.
    pub rhs: Real,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaGeneralReport {
    /// Schedule index chosen for each `j` (1-based `j`).
    pub selections: Vec<usize>,
    pub stages: Vec<BetaStage>,
    pub element: Option<TruncatedElement>,
    pub chain: Vec<ChainCheck>,
    pub verdict: Verdict,
}

/// Diagonal selection over approximants `fs_j`: the first schedule entry
/// whose stage has L^p error and derivative norm both below `1/j`.
pub fn beta_general(fs: &[StepFunction], ctx: &Context, schedule: &[Q]) -> Result<BetaGeneralReport> {
    let bounds: Vec<f64> = (1..=fs.len()).map(|j| 1.0 / j as f64).collect();
    beta_general_with(fs, ctx, schedule, &bounds)
}

/// [`beta_general`] with the selection bound at `j` tightened to
/// `bounds[j-1] ≤ 1/j`.
pub fn beta_general_with(fs: &[StepFunction], ctx: &Context, schedule: &[Q], bounds: &[f64]) -> Result<BetaGeneralReport> {
    validate_schedule(schedule)?;
    if bounds.len() != fs.len() {
        return Err(Error::Domain(format!("{} selection bounds for {} approximants", bounds.len(), fs.len())));
    }
    if let Some(j) = (1..=bounds.len()).find(|&j| !(bounds[j - 1] > 0.0 && bounds[j - 1] <= 1.0 / j as f64)) {
        return Err(Error::Domain(format!("selection bound at step {j} must lie in (0, 1/{j}]")));
    }
    let p = &ctx.p;
    let mut selections = Vec::with_capacity(fs.len());
    let mut stages = Vec::with_capacity(fs.len());
    for (idx, f) in fs.iter().enumerate() {
        let bound = Real::from_f64(bounds[idx]);
        let mut chosen = None;
        for (k, e) in schedule.iter().enumerate() {
            let st = beta_stage(f, ctx, e)?;
            if st.lp_error < bound && st.deriv_norm.value < bound {
                chosen = Some((k, st));
                break;
            }
        }
        match chosen {
            Some((k, st)) => {
                selections.push(k);
                stages.push(st);
            }
            None => {
                return Ok(BetaGeneralReport {
                    selections,
                    stages,
                    element: None,
                    chain: Vec::new(),
                    verdict: Verdict::Inconclusive,
                })
            }
        }
    }
    let pth = |f: &PiecewisePolynomial| lp_quasinorm(f, p, DEFAULT_TOL).map(|n| n.pth_power);
    let own: Vec<Real> =
        stages.iter().zip(fs).map(|(s, f)| pth(&s.u.sub(&f.to_piecewise()))).collect::<Result<_>>()?;
    let mut chain = Vec::new();
    let slack = Real::from_f64(1.0 + 4.0 * DEFAULT_TOL);
    for j in 0..fs.len() {
        for k in j + 1..fs.len() {
            let lhs = pth(&stages[j].u.sub(&stages[k].u))?;
            let mid = pth(&fs[j].to_piecewise().sub(&fs[k].to_piecewise()))?;
            let rhs = &own[j] + &mid + &own[k];
            let holds = lhs <= &rhs * &slack;
            chain.push(ChainCheck { j: j + 1, k: k + 1, lhs, rhs, holds });
        }
    }
    let reps = stages.iter().map(|s| s.u.clone()).collect();
    let element = TruncatedElement::new(reps, ctx.m.clone(), p.clone(), ctx.n_trunc)?;
    let verdict = if chain.iter().all(|c| c.holds) { Verdict::Pass } else { Verdict::Fail };
    Ok(BetaGeneralReport { selections, stages, element: Some(element), chain, verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftStep {
    pub j: usize,
    pub l1_norm: f64,
    #[serde(with = "serde_q")]
    pub eps: Q,
    #[serde(with = "serde_q")]
    pub psi_eps: Q,
    /// `‖ψ_j‖_{M_1,≤N}` measured.
    pub psi_m_norm: Real,
    /// `‖g_j‖_1 ‖ψ_j‖_{M_1,≤N}`.
    pub l1_times_psi: Real,
    #[serde(with = "serde_q")]
    pub integral: Q,
    /// `∫ g̃_j = 0` holds exactly.
    pub mean_zero_exact: bool,
    pub quantization_level: u32,
    pub quantization_error: Real,
    pub lift: BetaStage,
    /// `max{‖u_j - ũ_j‖_p / M_0, ‖ũ_j'‖_{M_1,≤N}}`.
    pub diagonal: Real,
    pub diagonal_ok: bool,
    /// `‖g̃_j - f_j'‖_{M_1,≤N}`.
    pub residual: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimitiveLiftReport {
    pub steps: Vec<LiftStep>,
    pub element: TruncatedElement,
    pub residual_decreasing: bool,
    pub verdict: Verdict,
}

/// Lift an element over `M_1` to one over `M` whose derivative recovers it.
pub fn primitive_lift(g: &TruncatedElement, ctx: &Context) -> Result<PrimitiveLiftReport> {
    let targets: Vec<f64> = (1..=g.len()).map(|j| 1.0 / j as f64).collect();
    primitive_lift_with(g, ctx, &targets)
}

/// [`primitive_lift`] with the derivative part of the diagonal bound at step
/// `j` tightened to `targets[j-1] ≤ 1/j`.
pub fn primitive_lift_with(g: &TruncatedElement, ctx: &Context, targets: &[f64]) -> Result<PrimitiveLiftReport> {
    if targets.len() != g.len() {
        return Err(Error::Domain(format!("{} diagonal targets for {} representatives", targets.len(), g.len())));
    }
    if let Some(j) = (1..=targets.len()).find(|&j| !(targets[j - 1] > 0.0 && targets[j - 1] <= 1.0 / j as f64)) {
        return Err(Error::Domain(format!("diagonal target at step {j} must lie in (0, 1/{j}]")));
    }
    let p = &ctx.p;
    let pf = crate::rational::to_f64(p);
    let lm0 = ctx.m.log_m(0).ok_or_else(|| Error::Precondition("no weight at n = 0".into()))?;
    let m0 = lm0.exp().to_f64();
    let mut steps = Vec::with_capacity(g.len());
    let mut reps = Vec::with_capacity(g.len());
    for (idx, gj) in g.reps.iter().enumerate() {
        let j = idx + 1;
        let l1 = lp_quasinorm(gj, &Q::one(), DEFAULT_TOL)?.value.to_f64();
        let inv_j = Q::new(1.into(), (j as i64).into());
        let alt = BigRational::from_float(1.0 / (j as f64 * (1.0 + l1 * (1.0 + 1e-9)))).unwrap_or_else(Q::zero);
        let eps = if alt < inv_j { alt } else { inv_j.clone() };
        let (psi_eps, psi) = ctx.mollifier(&eps).map_err(|e| e.at("psi"))?;
        let psi_m_norm = psi.certificate.m_norm_report.m_norm.clone();
        let integral = gj.integral()?;
        let g_tilde = gj.combine(&Q::one(), psi.realization(), &-&integral);
        let mean_zero_exact = g_tilde.integral()?.is_zero();
        let u = g_tilde.antiderivative()?;
        if !u.is_compact() {
            return Err(Error::Invariant("primitive of the mean-zero correction is not compact".into()));
        }
        // Split (M_0/j)^p evenly between quantization and mollification.
        let t_j = targets[idx];
        let half = m0 / j as f64 * 0.5f64.powf(1.0 / pf);
        let quant = quantize_to_budget(&u, p, half)?;
        let mut e = rational_below(t_j).min(inv_j.clone());
        let mut lift = beta_stage(&quant.step, ctx, &e)?;
        let mut tries = 0;
        while lift.strip_bound.to_f64() > half && tries < 30 {
            e /= Q::from_integer(2.into());
            lift = beta_stage(&quant.step, ctx, &e)?;
            tries += 1;
        }
        let u_tilde = lift.u.clone();
        let f = u.sub(&u_tilde);
        let lp_diff = lp_quasinorm(&f, p, DEFAULT_TOL)?.value;
        let diagonal = (lp_diff.ln() - &lm0).exp().max(lift.deriv_norm.value.clone());
        let diagonal_ok = diagonal <= Real::one() / Real::from_i64(j as i64)
            && lift.deriv_norm.value <= Real::from_f64(t_j);
        let (fd, _) = f.differentiate();
        let residual = m_norm(&g_tilde.sub(&fd), &ctx.m1, p, ctx.n_trunc)?.value;
        steps.push(LiftStep {
            j,
            l1_norm: l1,
            eps,
            psi_eps,
            l1_times_psi: Real::from_f64(l1) * &psi_m_norm,
            psi_m_norm,
            integral,
            mean_zero_exact,
            quantization_level: quant.m,
            quantization_error: quant.error,
            lift,
            diagonal,
            diagonal_ok,
            residual,
        });
        reps.push(f);
    }
    let element = TruncatedElement::new(reps, ctx.m.clone(), p.clone(), ctx.n_trunc)?;
    let residuals: Vec<Real> = steps.iter().map(|s| s.residual.clone()).collect();
    let residual_decreasing = residuals.iter().all(|r| r.is_zero()) || strictly_decreasing(&residuals);
    let ok = steps.iter().all(|s| s.mean_zero_exact && s.diagonal_ok);
    let verdict = if !ok {
        Verdict::Fail
    } else if residual_decreasing {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(PrimitiveLiftReport { steps, element, residual_decreasing, verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseReport {
    pub lift: PrimitiveLiftReport,
    #[serde(with = "serde_q_vec")]
    pub quantization_levels: Vec<Q>,
    pub correction: BetaGeneralReport,
    pub element: TruncatedElement,
    /// `‖α(f) - g‖_p`.
    pub alpha_error: Real,
    /// `‖f_j' - h_j‖_{M_1,≤N-1}`.
    pub delta_distance: Vec<Real>,
    /// `‖b_J'‖_{M_1,≤N}` of the correction's final representative.
    pub delta_beta_trace: Real,
    /// `‖b_J - s_J‖_p` of the correction against its step data.
    pub alpha_beta_error: Real,
    pub split: SplitReport,
    pub verdict: Verdict,
}

/// `f = f_0 - β(α f_0 - g)` with `f_0` the primitive lift of `h`.
///
/// Derivative bounds of the lift and of the correction are capped at
/// `tol / 4` and the step approximants of `α f_0 - g` at `tol / 2`, so that
/// a short element can still reach `tol`.
pub fn inverse_phi(g: &PiecewisePolynomial, h: &TruncatedElement, ctx: &Context, schedule: &[Q], tol: f64) -> Result<InverseReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let p = &ctx.p;
    let targets: Vec<f64> = (1..=h.len()).map(|j| (1.0 / j as f64).min(tol / 4.0)).collect();
    let lift = primitive_lift_with(h, ctx, &targets).map_err(|e| e.at("primitive_lift"))?;
    let f0 = &lift.element;
    let d = f0.last().cloned().unwrap_or_else(PiecewisePolynomial::zero).sub(g);
    let mut fs = Vec::with_capacity(h.len().max(1));
    let mut levels = Vec::new();
    for j in 1..=h.len().max(1) {
        let qz = quantize_to_budget(&d, p, (0.5 / j as f64).min(tol / 2.0)).map_err(|e| e.at("quantize"))?;
        levels.push(Q::from_integer(BigInt::from(qz.m)));
        fs.push(qz.step);
    }
    let bounds: Vec<f64> = (1..=fs.len()).map(|j| (1.0 / j as f64).min(tol / 4.0)).collect();
    let correction = beta_general_with(&fs, ctx, schedule, &bounds).map_err(|e| e.at("beta_general"))?;
    let Some(b) = correction.element.as_ref() else {
        return Err(Error::Certification("diagonal selection exhausted the schedule".into()).at("beta_general"));
    };
    let reps: Vec<PiecewisePolynomial> = f0.reps.iter().zip(&b.reps).map(|(x, y)| x.sub(y)).collect();
    let element = TruncatedElement::new(reps, ctx.m.clone(), p.clone(), ctx.n_trunc)?;
    let last = element.last().cloned().unwrap_or_else(PiecewisePolynomial::zero);
    let alpha_error = lp_quasinorm(&last.sub(g), p, DEFAULT_TOL)?.value;
    let n1 = ctx.n_trunc.saturating_sub(1);
    let delta_distance = element
        .reps
        .iter()
        .zip(&h.reps)
        .map(|(f, hj)| m_norm(&f.differentiate().0.sub(hj), &ctx.m1, p, n1).map(|n| n.value))
        .collect::<Result<Vec<_>>>()?;
    let final_stage = correction.stages.last().expect("nonempty selection");
    let delta_beta_trace = final_stage.deriv_norm.value.clone();
    let alpha_beta_error = final_stage.lp_error.clone();
    let split = phi_split(&element, tol)?;
    let t = Real::from_f64(tol);
    let ok = alpha_error <= t && delta_distance.last().is_some_and(|x| *x <= t) && correction.verdict == Verdict::Pass;
    let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    Ok(InverseReport {
        lift,
        quantization_levels: levels,
        correction,
        element,
        alpha_error,
        delta_distance,
        delta_beta_trace,
        alpha_beta_error,
        split,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};
    use crate::weights::DEFAULT_HORIZON;

    fn tent() -> PiecewisePolynomial {
        PiecewisePolynomial::box_kernel(&qi(1)).unwrap().convolve_box(&qi(1)).unwrap()
    }

    fn unit_weights() -> WeightSequence {
        WeightSequence::table_from_logs(vec![Real::zero(); 40], q(1, 2)).unwrap()
    }

    #[test]
    fn step_functions_validate_and_merge_jumps() {
        assert!(StepFunction::new(vec![(qi(0), qi(2), qi(1)), (qi(1), qi(3), qi(1))]).is_err());
        assert!(StepFunction::new(vec![(qi(1), qi(1), qi(1))]).is_err());
        let f = StepFunction::new(vec![(qi(1), qi(2), qi(-1)), (qi(0), qi(1), qi(1))]).unwrap();
        assert_eq!(f.steps()[0].a, qi(0));
        assert_eq!(f.jumps(), vec![(qi(0), qi(1)), (qi(1), qi(-2)), (qi(2), qi(1))]);
        assert_eq!(f.to_piecewise().eval(&q(3, 2)), qi(-1));
        assert!((f.jump_factor(&q(1, 2)) - (2.0 + 2f64.sqrt()).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn quantization_of_a_step_is_exact() {
        let f = StepFunction::new(vec![(qi(0), q(1, 2), qi(3))]).unwrap();
        let qz = quantize_to_budget(&f.to_piecewise(), &q(1, 2), 1e-12).unwrap();
        assert_eq!(qz.m, 1);
        assert!(qz.error.is_zero());
    }

    #[test]
    fn lift_with_box_kernel_is_convolution() {
        let f = StepFunction::new(vec![(qi(0), qi(1), qi(1)), (qi(2), qi(3), qi(-2))]).unwrap();
        let v = PiecewisePolynomial::box_kernel(&q(1, 4)).unwrap();
        let direct = v
            .convolve_indicator(&qi(0), &qi(1))
            .unwrap()
            .combine(&qi(1), &v.convolve_indicator(&qi(2), &qi(3)).unwrap(), &qi(-2));
        assert_eq!(lift_with(&f, &v).unwrap(), direct);
    }

    #[test]
    fn constant_sequence_has_zero_trace_and_identity_alpha() {
        let m = unit_weights();
        let e = TruncatedElement::new(vec![tent(); 3], m, q(1, 2), 1).unwrap();
        assert!(e.norm_trace.iter().all(|t| t.is_zero()));
        let a = alpha(&e, 1e-3).unwrap();
        assert_eq!(a.limit, tent());
        assert!(a.converged);
    }

    #[test]
    fn delta_of_tent_is_signed_pair() {
        let m = unit_weights();
        let e = TruncatedElement::new(vec![tent(); 2], m, q(1, 2), 1).unwrap();
        let d = delta(&e).unwrap();
        let pair = StepFunction::new(vec![(qi(0), qi(1), qi(1)), (qi(1), qi(2), qi(-1))]).unwrap().to_piecewise();
        assert!(d.element.reps.iter().all(|r| *r == pair));
        assert!(d.contraction);
    }

    #[test]
    fn delta_rejects_discontinuous_derivatives() {
        let m = unit_weights();
        let e = TruncatedElement::new(vec![tent()], m, q(1, 2), 0).unwrap();
        assert!(delta(&e).is_err());
        let e = TruncatedElement { n_trunc: 1, ..TruncatedElement::new(vec![], unit_weights(), q(1, 2), 1).unwrap() };
        let stepped = PiecewisePolynomial::box_kernel(&qi(1)).unwrap();
        let e = TruncatedElement { reps: vec![stepped], ..e };
        assert!(matches!(delta(&e), Err(Error::Domain(_))));
        let box1 = PiecewisePolynomial::box_kernel(&qi(1)).unwrap();
        let e = TruncatedElement::new(vec![box1], unit_weights(), q(1, 2), 1);
        assert!(e.is_err());
    }

    #[test]
    fn split_of_tent_with_unit_weights_has_zero_residual() {
        let e = TruncatedElement::new(vec![tent()], unit_weights(), q(1, 2), 1).unwrap();
        let s = phi_split(&e, 1e-3).unwrap();
        assert!(s.norm_identity_residual.is_zero());
        let z = TruncatedElement::zero(unit_weights(), q(1, 2), 1, 2).unwrap();
        let s = phi_split(&z, 1e-3).unwrap();
        assert!(s.norm_identity_residual.is_zero());
        assert!(s.delta_part.norms().iter().all(|n| n.is_zero()));
    }

    #[test]
    fn beta_of_zero_is_zero() {
        let m = WeightSequence::geometric_exponential(qi(1), q(1, 2), DEFAULT_HORIZON).unwrap();
        let ctx = Context::new(&m, 2).unwrap();
        let r = beta_step(&StepFunction::zero(), &ctx, &[q(1, 5), q(1, 10)]).unwrap();
        assert!(r.element.reps.iter().all(|u| u.is_zero()));
        assert!(r.lp_errors.iter().all(|x| x.is_zero()));
        assert!(validate_schedule(&[q(1, 10), q(1, 5)]).is_err());
    }
}
