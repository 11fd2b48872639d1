use carleman::approx::{
    beta_step, inverse_phi, phi_split, primitive_lift, BetaStepReport, Context,
};
use carleman::mollify::{build_mollifier_with, recheck};
use carleman::rational::{format_q, q, to_f64};
use carleman::tower::{
    build_tower, depth_for_tail, prop15_report_for, sandwich_check, truncated_m_norm, CertificateStatus,
    DecaySequence, Verdict,
};
use carleman::weights::{build_minorant, mu_classify, p_regularity_report, shift, MuVerdict, RegularityBranch};
use carleman::{PiecewisePolynomial, Real, Q};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Config, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }

    fn worst(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

impl From<Verdict> for Status {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Status::Pass,
            Verdict::Fail => Status::Fail,
            Verdict::Inconclusive => Status::Inconclusive,
        }
    }
}

pub enum Failure {
    Config(ConfigError),
    Core(carleman::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<carleman::Error> for Failure {
    fn from(e: carleman::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        use carleman::Error::*;
        match self {
            Failure::Config(_) => 3,
            Failure::Core(e) => match e.root() {
                Domain(_) | Precondition(_) => 3,
                Resource(_) | Certification(_) => 2,
                _ => 1,
            },
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Config(e) => e.to_string(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

pub struct Outcome {
    pub status: Status,
    pub result: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

type Run = Result<Outcome, Failure>;

pub const COMMANDS: &[&str] = &[
    "weights analyze",
    "weights minorant",
    "tower prop15",
    "tower sandwich",
    "tower norm",
    "mollifier build",
    "approx beta",
    "approx lift",
    "approx split",
    "approx inverse",
    "demo independence",
];

pub fn dispatch(command: &str, cfg: &mut Config, seed: u64) -> Run {
    match command {
        "weights analyze" => weights_analyze(cfg),
        "weights minorant" => weights_minorant(cfg),
        "tower prop15" => tower_prop15(cfg, seed),
        "tower sandwich" => tower_sandwich(cfg),
        "tower norm" => tower_norm(cfg),
        "mollifier build" => mollifier_build(cfg),
        "approx beta" => approx_beta(cfg),
        "approx lift" => approx_lift(cfg),
        "approx split" => approx_split(cfg),
        "approx inverse" => approx_inverse(cfg),
        "demo independence" => demo_independence(cfg),
        other => Err(ConfigError(format!("unknown command `{other}`")).into()),
    }
}

fn num(x: &Real) -> String {
    format!("{:.12e}", x.to_f64())
}

fn rat(x: &Q) -> String {
    format_q(x)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn weights_analyze(cfg: &mut Config) -> Run {
    let m = cfg.weights()?;
    cfg.default("analyze.horizon", "40");
    let horizon = cfg.usize("analyze.horizon")?;
    let reg = p_regularity_report(&m, horizon)?;
    let mu = mu_classify(&m, horizon)?;
    let undetermined = reg.regularity_branch == RegularityBranch::Undetermined || mu.verdict == MuVerdict::HorizonUndetermined;
    let status = if undetermined { Status::Inconclusive } else { Status::Pass };
    let rows = (0..=horizon)
        .map(|n| {
            vec![
                n.to_string(),
                num(&m.log_m(n).unwrap_or_else(Real::zero)),
                num(&reg.qlog_terms[n]),
                num(&mu.partial_sums[n]),
                if n == 0 { String::new() } else { num(&reg.superquadratic.ratios[n - 1]) },
            ]
        })
        .collect();
    Ok(Outcome {
        status,
        result: json!({
            "mu_verdict": to_value(&mu.verdict),
            "regularity_branch": to_value(&reg.regularity_branch),
            "regularity": to_value(&reg),
        }),
        header: vec!["n", "log_m", "q_pow_n_log_m", "mu_partial_sum", "log_m_over_n2"],
        rows,
    })
}

fn weights_minorant(cfg: &mut Config) -> Run {
    let m = cfg.weights()?;
    cfg.default("minorant.eps", "1/100");
    cfg.default("minorant.poly", "1, 1, 1");
    cfg.default("minorant.horizon", &m.horizon().to_string());
    let eps = cfg.positive_q("minorant.eps")?;
    let poly = cfg.poly("minorant.poly")?;
    let horizon = cfg.usize("minorant.horizon")?;
    let r = build_minorant(&m, &poly, &eps, horizon)?;
    let status = if r.checks.all() { Status::Pass } else { Status::Fail };
    let rows = (0..=horizon)
        .map(|n| {
            let lm = m.log_m(n).unwrap_or_else(Real::zero);
            let ln = r.n.log_m(n).unwrap_or_else(Real::zero);
            vec![n.to_string(), num(&lm), num(&ln)]
        })
        .collect();
    Ok(Outcome { status, result: to_value(&r), header: vec!["n", "log_m", "log_minorant"], rows })
}

fn decay_from(cfg: &mut Config) -> Result<DecaySequence, Failure> {
    cfg.default("tower.s", "1");
    cfg.default("tower.r", "1/4");
    Ok(DecaySequence::geometric(cfg.positive_q("tower.s")?, cfg.positive_q("tower.r")?)?)
}

fn tower_prop15(cfg: &mut Config, seed: u64) -> Run {
    cfg.default("tower.n_max", "8");
    cfg.default("tower.p", "1/2");
    cfg.default("tower.samples", "0");
    let n_max = cfg.usize("tower.n_max")?;
    let ps = cfg.q_list("tower.p")?;
    for (i, p) in ps.iter().enumerate() {
        if p <= &Q::from_integer(0.into()) || p >= &Q::from_integer(1.into()) {
            return Err(ConfigError(format!("`tower.p` entry {} must lie in (0, 1)", i + 1)).into());
        }
    }
    let samples = cfg.usize("tower.samples")?;
    let decays = if samples == 0 {
        vec![decay_from(cfg)?]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let s = q(rng.gen_range(1..=20), rng.gen_range(1..=20));
                let r = [4, 8, 16][rng.gen_range(0..3)];
                DecaySequence::geometric(s, q(1, r))
            })
            .collect::<carleman::Result<Vec<_>>>()?
    };
    let mut status = Status::Pass;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for a in &decays {
        let tower = build_tower(a, n_max)?;
        for n in 0..=n_max {
            for p in &ps {
                let r = prop15_report_for(&tower, n, p)?;
                if !r.pass() {
                    status = Status::Fail;
                }
                rows.push(vec![
                    rat(&a.a(0)),
                    rat(&(a.a(1) / a.a(0))),
                    n.to_string(),
                    rat(p),
                    rat(&r.sup_formula),
                    rat(&r.sup_measured.upper),
                    num(&r.lp_formula),
                    num(&r.lp_measured.value),
                    format!("{:.3e}", r.lp_rel_diff.to_f64()),
                    r.sup_match.to_string(),
                    r.lp_exact_match.to_string(),
                    r.structural_match.to_string(),
                ]);
                reports.push(json!({ "s": rat(&a.a(0)), "report": to_value(&r) }));
            }
        }
    }
    Ok(Outcome {
        status,
        result: json!({ "reports": reports }),
        header: vec![
            "s", "r", "n", "p", "sup_formula", "sup_measured", "lp_formula", "lp_measured", "lp_rel_diff", "sup_match",
            "lp_exact_match", "structural_match",
        ],
        rows,
    })
}

fn tower_sandwich(cfg: &mut Config) -> Run {
    let a = decay_from(cfg)?;
    cfg.default("tower.p", "1/2");
    cfg.default("tower.n_max", "3");
    cfg.default("tower.tail_fraction", "1/1000000");
    let p = cfg.exponent("tower.p")?;
    let n_max = cfg.usize("tower.n_max")?;
    let frac = cfg.positive_q("tower.tail_fraction")?;
    let mut status = Status::Pass;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let depth = depth_for_tail(&a, n, &frac);
        let r = sandwich_check(&a, n, depth, &p)?;
        status = status.worst(r.verdict.into());
        rows.push(vec![
            n.to_string(),
            depth.to_string(),
            num(&r.ratio),
            num(&r.lower),
            num(&r.upper),
            format!("{:.3e}", r.delta),
            Status::from(r.verdict).label().to_string(),
        ]);
        reports.push(to_value(&r));
    }
    Ok(Outcome {
        status,
        result: json!({ "reports": reports }),
        header: vec!["n", "depth", "ratio", "lower", "upper", "delta", "verdict"],
        rows,
    })
}

fn tower_norm(cfg: &mut Config) -> Run {
    let a = decay_from(cfg)?;
    let m = cfg.weights()?;
    cfg.default("tower.n_trunc", "6");
    let n = cfg.usize("tower.n_trunc")?;
    cfg.default("tower.depth", &n.to_string());
    let depth = cfg.usize("tower.depth")?;
    let r = truncated_m_norm(&a, &m, m.p(), n, depth)?;
    let status = match r.status {
        CertificateStatus::Certified => Status::Pass,
        CertificateStatus::HorizonOnly => Status::Inconclusive,
    };
    let rows = r.head_ratios.iter().enumerate().map(|(n, x)| vec![n.to_string(), num(x)]).collect();
    Ok(Outcome { status, result: to_value(&r), header: vec!["n", "ratio"], rows })
}

fn mollifier_build(cfg: &mut Config) -> Run {
    let m = cfg.weights()?;
    cfg.default("mollifier.eps", "1/10");
    cfg.default("mollifier.depth", "10");
    cfg.default("mollifier.poly", "1, 1, 1");
    let eps = cfg.positive_q("mollifier.eps")?;
    let depth = cfg.usize("mollifier.depth")?;
    let poly = cfg.poly("mollifier.poly")?;
    let v = build_mollifier_with(&m, m.p(), &eps, &poly, depth)?;
    let again = recheck(&v.certificate, &m, m.p())?;
    let status = if v.certificate.valid() && again.all() { Status::Pass } else { Status::Fail };
    let c = &v.certificate;
    let rows = c
        .m_norm_report
        .head_ratios
        .iter()
        .enumerate()
        .map(|(n, x)| vec![n.to_string(), rat(&c.a.a(n)), num(x), num(&c.decay.log_margins[n])])
        .collect();
    Ok(Outcome {
        status,
        result: json!({ "certificate": to_value(c), "recheck": to_value(&again) }),
        header: vec!["n", "a_n", "norm_ratio", "log_margin"],
        rows,
    })
}

fn context(cfg: &mut Config, default_n: usize) -> Result<Context, Failure> {
    let m = cfg.weights()?;
    cfg.default("approx.n_trunc", &default_n.to_string());
    Ok(Context::new(&m, cfg.usize("approx.n_trunc")?)?)
}

fn beta_rows(r: &BetaStepReport) -> Vec<Vec<String>> {
    r.stages
        .iter()
        .enumerate()
        .map(|(j, s)| {
            vec![
                (j + 1).to_string(),
                rat(&s.eps),
                rat(&s.mollifier_eps),
                num(&s.lp_error),
                num(&s.deriv_norm.value),
                num(&s.strip_bound),
            ]
        })
        .collect()
}

const BETA_HEADER: &[&str] = &["j", "eps", "mollifier_eps", "lp_error", "deriv_norm", "strip_bound"];

fn beta_from(cfg: &mut Config, ctx: &Context) -> Result<BetaStepReport, Failure> {
    cfg.default("approx.steps", "0:1:1, 3/2:2:-2");
    cfg.default("approx.schedule", "1/5, 1/10, 1/20, 1/50");
    let f = cfg.steps("approx.steps")?;
    let schedule = cfg.schedule("approx.schedule")?;
    Ok(beta_step(&f, ctx, &schedule)?)
}

fn approx_beta(cfg: &mut Config) -> Run {
    let ctx = context(cfg, 10)?;
    let r = beta_from(cfg, &ctx)?;
    Ok(Outcome { status: r.verdict.into(), result: to_value(&r), header: BETA_HEADER.to_vec(), rows: beta_rows(&r) })
}

fn split_tol(cfg: &mut Config) -> Result<f64, Failure> {
    cfg.default("approx.split_tol", "1e-10");
    Ok(cfg.f64_positive("approx.split_tol")?)
}

fn approx_split(cfg: &mut Config) -> Run {
    let ctx = context(cfg, 10)?;
    let tol = split_tol(cfg)?;
    cfg.default("approx.residual_bound", "2e-10");
    let bound = cfg.f64_positive("approx.residual_bound")?;
    let r = beta_from(cfg, &ctx)?;
    let s = phi_split(&r.element, tol)?;
    let status = if s.norm_identity_residual.to_f64() <= bound { Status::Pass } else { Status::Fail };
    let rows = s.residuals.iter().enumerate().map(|(j, x)| vec![(j + 1).to_string(), num(x)]).collect();
    Ok(Outcome {
        status,
        result: json!({ "beta": to_value(&r), "split": to_value(&s) }),
        header: vec!["j", "residual"],
        rows,
    })
}

/// An element over `M_1`: the β-lift of `approx.h_steps` along `approx.h_schedule`.
fn derivative_target(cfg: &mut Config, ctx: &Context) -> Result<BetaStepReport, Failure> {
    cfg.default("approx.h_steps", "0:1:1, 1:2:-1");
    cfg.default("approx.h_schedule", "1/5, 1/10");
    let f = cfg.steps("approx.h_steps")?;
    let schedule = cfg.schedule("approx.h_schedule")?;
    let ctx1 = Context::new(&shift(&ctx.m, 1)?, ctx.n_trunc)?;
    Ok(beta_step(&f, &ctx1, &schedule)?)
}

fn approx_lift(cfg: &mut Config) -> Run {
    let ctx = context(cfg, 6)?;
    let h = derivative_target(cfg, &ctx)?;
    let r = primitive_lift(&h.element, &ctx)?;
    let rows = r
        .steps
        .iter()
        .map(|s| {
            vec![s.j.to_string(), s.quantization_level.to_string(), num(&s.diagonal), num(&s.residual), s.diagonal_ok.to_string()]
        })
        .collect();
    Ok(Outcome {
        status: r.verdict.into(),
        result: json!({ "target": to_value(&h), "lift": to_value(&r) }),
        header: vec!["j", "quantization_level", "diagonal", "residual", "diagonal_ok"],
        rows,
    })
}

struct Inverse {
    h: BetaStepReport,
    r: carleman::approx::InverseReport,
    schedule: Vec<Q>,
}

fn run_inverse(cfg: &mut Config) -> Result<Inverse, Failure> {
    let ctx = context(cfg, 6)?;
    cfg.default("approx.g_steps", "0:1:1");
    cfg.default("approx.schedule", "1/5, 1/10, 1/20, 1/50");
    cfg.default("approx.tol", "1/10");
    let g: PiecewisePolynomial = cfg.steps("approx.g_steps")?.to_piecewise();
    let schedule = cfg.schedule("approx.schedule")?;
    let tol = cfg.f64_positive("approx.tol")?;
    let h = derivative_target(cfg, &ctx)?;
    let r = inverse_phi(&g, &h.element, &ctx, &schedule, tol)?;
    Ok(Inverse { h, r, schedule })
}

fn inverse_rows(r: &carleman::approx::InverseReport) -> Vec<Vec<String>> {
    r.delta_distance
        .iter()
        .enumerate()
        .map(|(j, d)| vec![(j + 1).to_string(), num(d), num(&r.split.residuals[j])])
        .collect()
}

fn approx_inverse(cfg: &mut Config) -> Run {
    let Inverse { h, r, .. } = run_inverse(cfg)?;
    Ok(Outcome {
        status: r.verdict.into(),
        result: json!({ "target": to_value(&h), "inverse": to_value(&r) }),
        header: vec!["j", "delta_distance", "split_residual"],
        rows: inverse_rows(&r),
    })
}

fn check(name: &str, value: f64, bound: f64) -> (bool, Value, Vec<String>) {
    let ok = value <= bound;
    (ok, json!({ "check": name, "value": value, "bound": bound, "pass": ok }), vec![
        name.to_string(),
        format!("{value:.6e}"),
        format!("{bound:.6e}"),
        ok.to_string(),
    ])
}

/// Round trip `g, h -> u -> (α u, δ u)` with a single verdict.
fn demo_independence(cfg: &mut Config) -> Run {
    cfg.default("weights.kappa", "1");
    cfg.default("weights.p", "1/2");
    cfg.default("demo.residual_bound", "2e-10");
    let Inverse { h, r, schedule } = run_inverse(cfg)?;
    let tol = cfg.f64_positive("approx.tol")?;
    let residual_bound = cfg.f64_positive("demo.residual_bound")?;
    let last = to_f64(schedule.last().expect("nonempty schedule"));
    let dd = r.delta_distance.iter().map(Real::to_f64).fold(0.0, f64::max);
    let checks = [
        check("alpha_error", r.alpha_error.to_f64(), tol),
        check("delta_distance", dd, tol),
        check("delta_beta_trace", r.delta_beta_trace.to_f64(), last),
        check("split_residual", r.split.norm_identity_residual.to_f64(), residual_bound),
    ];
    let ok = checks.iter().all(|c| c.0);
    Ok(Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        result: json!({
            "checks": checks.iter().map(|c| c.1.clone()).collect::<Vec<_>>(),
            "target_verdict": to_value(&h.verdict),
            "inverse_verdict": to_value(&r.verdict),
            "inverse": to_value(&r),
        }),
        header: vec!["check", "value", "bound", "pass"],
        rows: checks.into_iter().map(|c| c.2).collect(),
    })
}

