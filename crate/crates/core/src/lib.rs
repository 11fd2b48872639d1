//! Exact and certified computations for Carleman-Sobolev classes with a
//! summability exponent `0 < p < 1`.
//!
//! The crate is organised bottom-up:
//!
//! * [`piecewise`]: exact piecewise polynomials over `Q`, their calculus, and
//!   `L^p` quasi-norms.
//! * [`weights`]: weight sequences `M`, the `μ_M` classification,
//!   p-regularity, shifts, and convex minorants.
//! * [`tower`]: box-convolution towers `u_{a,n}` with their closed-form top
//!   derivatives and truncated `M`-norms.
//! * [`mollify`]: certified mollifiers with unit integral, small support and
//!   small `M`-norm.
//! * [`approx`]: truncated elements and the maps `α`, `δ`, `β`, the primitive
//!   lift, and the splitting `φ`.

pub mod approx;
pub mod mollify;
pub mod piecewise;
pub mod poly;
pub mod quad;
pub mod rational;
pub mod real;
pub mod tower;
pub mod weights;

pub use piecewise::{JumpList, PiecewisePolynomial};
pub use rational::{parse_q, q, Q};
pub use real::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("[{stage}] {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Innermost error, with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coefficients `[c0, c1, ...]` of the polynomial `P(n) = c0 + c1 n + ...`
/// used in growth bounds.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GrowthPoly(#[serde(with = "rational::serde_q_vec")] pub Vec<Q>);

impl GrowthPoly {
    /// `n^2 + n + 1`.
    pub fn default_quadratic() -> Self {
        GrowthPoly(vec![q(1, 1), q(1, 1), q(1, 1)])
    }

    pub fn eval(&self, n: u64) -> Q {
        let x = Q::from_integer((n as i64).into());
        let mut acc = Q::from_integer(0.into());
        for c in self.0.iter().rev() {
            acc = acc * &x + c;
        }
        acc
    }

    pub fn eval_real(&self, n: u64) -> Real {
        Real::from_rational(&self.eval(n))
    }
}
