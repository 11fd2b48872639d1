//! Piecewise polynomials with rational breakpoints and coefficients.
//!
//! Each piece is stored in local coordinates `t = x - breaks[i]` on
//! `[breaks[i], breaks[i+1])`. The function is zero left of the first break
//! and equal to the constant `tail` right of the last one; `tail` is nonzero
//! only for running integrals of functions with nonzero mass.

mod norms;
mod roots;

use std::cmp::Ordering;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::poly::Poly;
use crate::rational::{format_q, Q};
use crate::{Error, Result};

pub use norms::{lp_quasinorm, lp_quasinorm_default, sup_norm, NormValue, SupNorm, DEFAULT_TOL};
pub use roots::isolate_roots_unit;

#[derive(Clone, PartialEq, Eq)]
pub struct PiecewisePolynomial {
    breaks: Vec<Q>,
    pieces: Vec<Poly>,
    tail: Q,
}

/// Jump discontinuities `f(x+) - f(x-)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct JumpList {
    #[serde(with = "crate::rational::serde_q_vec")]
    pub locations: Vec<Q>,
    #[serde(with = "crate::rational::serde_q_vec")]
    pub magnitudes: Vec<Q>,
}

impl JumpList {
    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }
}

impl PiecewisePolynomial {
    pub fn zero() -> Self {
        PiecewisePolynomial { breaks: Vec::new(), pieces: Vec::new(), tail: Q::zero() }
    }

    /// Build from breakpoints and local-coordinate pieces, then canonicalize.
    pub fn new(breaks: Vec<Q>, pieces: Vec<Poly>) -> Result<Self> {
        Self::with_tail(breaks, pieces, Q::zero())
    }

    pub fn with_tail(breaks: Vec<Q>, pieces: Vec<Poly>, tail: Q) -> Result<Self> {
        if breaks.is_empty() {
            if !pieces.is_empty() || !tail.is_zero() {
                return Err(Error::Domain("pieces given without breakpoints".into()));
            }
            return Ok(Self::zero());
        }
        if pieces.len() + 1 != breaks.len() {
            return Err(Error::Domain(format!(
                "{} breakpoints need {} pieces, got {}",
                breaks.len(),
                breaks.len() - 1,
                pieces.len()
            )));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("breakpoints must be strictly increasing".into()));
        }
        let mut f = PiecewisePolynomial { breaks, pieces, tail };
        f.canonicalize();
        Ok(f)
    }

    /// Build from pieces given in global coordinates `x`.
    pub fn from_global(breaks: Vec<Q>, pieces: Vec<Poly>) -> Result<Self> {
        if pieces.len() + 1 != breaks.len() && !(breaks.is_empty() && pieces.is_empty()) {
            return Err(Error::Domain("piece count must be breakpoint count - 1".into()));
        }
        let local = pieces.iter().zip(&breaks).map(|(p, b)| p.taylor_shift(b)).collect();
        Self::new(breaks, local)
    }

    /// `(1/a) χ_[0,a]`.
    pub fn box_kernel(a: &Q) -> Result<Self> {
        if !a.is_positive() {
            return Err(Error::Domain(format!("box width must be positive, got {}", format_q(a))));
        }
        Self::new(vec![Q::zero(), a.clone()], vec![Poly::constant(a.recip())])
    }

    /// `χ_[a,b]`.
    pub fn indicator(a: &Q, b: &Q) -> Result<Self> {
        Self::step(a, b, &Q::one())
    }

    /// `c χ_[a,b]`.
    pub fn step(a: &Q, b: &Q, c: &Q) -> Result<Self> {
        if a >= b {
            return Err(Error::Domain(format!("empty interval [{}, {}]", format_q(a), format_q(b))));
        }
        Self::new(vec![a.clone(), b.clone()], vec![Poly::constant(c.clone())])
    }

    /// Hash of the canonical representation.
    pub(crate) fn content_hash<H: std::hash::Hasher>(&self, state: &mut H) {
        use std::hash::Hash;
        for b in self.breaks.iter().chain(std::iter::once(&self.tail)) {
            b.numer().hash(state);
            b.denom().hash(state);
        }
        self.pieces.hash(state);
    }

    pub fn breaks(&self) -> &[Q] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Poly] {
        &self.pieces
    }

    pub fn tail(&self) -> &Q {
        &self.tail
    }

    pub fn is_zero(&self) -> bool {
        self.breaks.is_empty()
    }

    pub fn is_compact(&self) -> bool {
        self.tail.is_zero()
    }

    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    /// `[first, last]` breakpoint, or `None` for the zero function.
    pub fn support(&self) -> Option<(Q, Q)> {
        Some((self.breaks.first()?.clone(), self.breaks.last()?.clone()))
    }

    pub fn support_length(&self) -> Q {
        self.support().map(|(a, b)| b - a).unwrap_or_else(Q::zero)
    }

    /// Maximum piece degree; `None` for the zero function.
    pub fn degree(&self) -> Option<usize> {
        let d = self.pieces.iter().filter_map(|p| p.degree()).max();
        if self.tail.is_zero() {
            d
        } else {
            Some(d.unwrap_or(0))
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(|p| p.is_constant())
    }

    pub fn width(&self, i: usize) -> Q {
        crate::rational::q_sub(&self.breaks[i + 1], &self.breaks[i])
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, x: &Q) -> Q {
        match self.locate(x) {
            Loc::Before => Q::zero(),
            Loc::Tail => self.tail.clone(),
            Loc::Piece(i) => self.pieces[i].eval(&(x - &self.breaks[i])),
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let idx = self.breaks.partition_point(|b| crate::rational::to_f64(b) <= x);
        if idx == 0 {
            0.0
        } else if idx == self.breaks.len() {
            crate::rational::to_f64(&self.tail)
        } else {
            let i = idx - 1;
            self.pieces[i].eval_f64(x - crate::rational::to_f64(&self.breaks[i]))
        }
    }

    fn locate(&self, x: &Q) -> Loc {
        let idx = self.breaks.partition_point(|b| b <= x);
        if idx == 0 {
            Loc::Before
        } else if idx == self.breaks.len() {
            Loc::Tail
        } else {
            Loc::Piece(idx - 1)
        }
    }

    pub fn translate(&self, s: &Q) -> Self {
        if s.is_zero() {
            return self.clone();
        }
        PiecewisePolynomial {
            breaks: self.breaks.iter().map(|b| b + s).collect(),
            pieces: self.pieces.clone(),
            tail: self.tail.clone(),
        }
    }

    pub fn scale(&self, k: &Q) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        PiecewisePolynomial {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.scale(k)).collect(),
            tail: &self.tail * k,
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Q::one())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(&Q::one(), other, &Q::one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(&Q::one(), other, &-Q::one())
    }

    /// `ka * self + kb * other`.
    pub fn combine(&self, ka: &Q, other: &Self, kb: &Q) -> Self {
        if other.is_zero() || kb.is_zero() {
            return self.scale(ka);
        }
        if self.is_zero() || ka.is_zero() {
            return other.scale(kb);
        }
        let xs = merge_sorted(&self.breaks, &other.breaks);
        let mut ca = 0usize;
        let mut cb = 0usize;
        let mut pieces = Vec::with_capacity(xs.len().saturating_sub(1));
        for x in &xs[..xs.len() - 1] {
            let pa = self.local_at(x, &mut ca);
            let pb = other.local_at(x, &mut cb);
            pieces.push(&scaled(&pa, ka) + &scaled(&pb, kb));
        }
        let tail = ka * &self.tail + kb * &other.tail;
        let mut f = PiecewisePolynomial { breaks: xs, pieces, tail };
        f.canonicalize();
        f
    }

    /// `Σ coeffs[i] * fs[i]`.
    pub fn linear_combine(coeffs: &[Q], fs: &[Self]) -> Result<Self> {
        if coeffs.len() != fs.len() {
            return Err(Error::Precondition(format!(
                "{} coefficients for {} functions",
                coeffs.len(),
                fs.len()
            )));
        }
        // Pairwise reduction keeps intermediate breakpoint sets balanced.
        let mut terms: Vec<Self> =
            coeffs.iter().zip(fs).filter(|(c, f)| !c.is_zero() && !f.is_zero()).map(|(c, f)| f.scale(c)).collect();
        if terms.is_empty() {
            return Ok(Self::zero());
        }
        while terms.len() > 1 {
            let mut next = Vec::with_capacity(terms.len().div_ceil(2));
            let mut it = terms.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(a.add(&b)),
                    None => next.push(a),
                }
            }
            terms = next;
        }
        Ok(terms.pop().unwrap())
    }

    /// Piece valid on `[x, next break)` in coordinates relative to `x`.
    /// `cursor` must be nondecreasing across calls.
    fn local_at(&self, x: &Q, cursor: &mut usize) -> Poly {
        if self.breaks.is_empty() || x < &self.breaks[0] {
            return Poly::zero();
        }
        while *cursor + 1 < self.breaks.len() && &self.breaks[*cursor + 1] <= x {
            *cursor += 1;
        }
        let i = *cursor;
        if i + 1 == self.breaks.len() {
            return Poly::constant(self.tail.clone());
        }
        let off = x - &self.breaks[i];
        self.pieces[i].taylor_shift(&off)
    }

    fn canonicalize(&mut self) {
        // Merge adjacent pieces that are the same polynomial.
        if self.pieces.len() > 1 {
            let n = self.pieces.len();
            let mut breaks = Vec::with_capacity(n + 1);
            let mut pieces: Vec<Poly> = Vec::with_capacity(n);
            let old_breaks = std::mem::take(&mut self.breaks);
            let old_pieces = std::mem::take(&mut self.pieces);
            let mut bit = old_breaks.into_iter();
            breaks.push(bit.next().unwrap());
            let mut cur_start_idx = 0usize;
            for (i, p) in old_pieces.into_iter().enumerate() {
                let b = bit.next().unwrap();
                if i > 0 {
                    let last = pieces.last().unwrap();
                    let h = &breaks[breaks.len() - 1] - &breaks[cur_start_idx];
                    if continues(last, &h, &p) {
                        // Extend: replace the shared breakpoint with the new right end.
                        *breaks.last_mut().unwrap() = b;
                        continue;
                    }
                    cur_start_idx = breaks.len() - 1;
                }
                pieces.push(p);
                breaks.push(b);
            }
            self.breaks = breaks;
            self.pieces = pieces;
        }
        // Fold trailing pieces equal to the tail constant.
        while let Some(p) = self.pieces.last() {
            let is_tail = if self.tail.is_zero() { p.is_zero() } else { p.is_constant() && p.constant_term() == self.tail };
            if !is_tail {
                break;
            }
            self.pieces.pop();
            self.breaks.pop();
        }
        // Trim leading zero pieces.
        let lead = self.pieces.iter().take_while(|p| p.is_zero()).count();
        if lead > 0 {
            self.pieces.drain(..lead);
            self.breaks.drain(..lead);
        }
        if self.pieces.is_empty() && self.tail.is_zero() {
            self.breaks.clear();
        }
        if self.breaks.len() == 1 && self.pieces.is_empty() && self.tail.is_zero() {
            self.breaks.clear();
        }
    }

    /// Classical piecewise derivative together with jump atoms.
    pub fn differentiate(&self) -> (Self, JumpList) {
        let jumps = self.jumps();
        let mut d = PiecewisePolynomial {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.derivative()).collect(),
            tail: Q::zero(),
        };
        d.canonicalize();
        (d, jumps)
    }

    /// `n`-fold classical derivative with the jump list of each order
    /// `0..n` (jumps of the function being differentiated at that step).
    pub fn differentiate_n(&self, n: usize) -> (Self, Vec<JumpList>) {
        let mut f = self.clone();
        let mut all = Vec::with_capacity(n);
        for _ in 0..n {
            let (d, j) = f.differentiate();
            all.push(j);
            f = d;
        }
        (f, all)
    }

    pub fn jumps(&self) -> JumpList {
        let mut out = JumpList::default();
        for (i, b) in self.breaks.iter().enumerate() {
            let right = if i < self.pieces.len() { self.pieces[i].constant_term() } else { self.tail.clone() };
            let j = if i == 0 {
                right
            } else {
                let (n, d) = self.pieces[i - 1].eval_frac(&self.width(i - 1));
                if &n * right.denom() == right.numer() * &d {
                    continue;
                }
                right - crate::rational::q_new(n, d)
            };
            if !j.is_zero() {
                out.locations.push(b.clone());
                out.magnitudes.push(j);
            }
        }
        out
    }

    pub fn is_continuous(&self) -> bool {
        self.jumps().is_empty()
    }

    /// Running integral `F(x) = ∫_{-∞}^x f`.
    pub fn antiderivative(&self) -> Result<Self> {
        if !self.tail.is_zero() {
            return Err(Error::Domain("antiderivative of a function with nonzero tail is unbounded".into()));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        let mut acc = Q::zero();
        for (i, p) in self.pieces.iter().enumerate() {
            let ip = p.integral();
            let next = &acc + ip.eval(&self.width(i));
            pieces.push(&ip + &Poly::constant(acc));
            acc = next;
        }
        let mut f = PiecewisePolynomial { breaks: self.breaks.clone(), pieces, tail: acc };
        f.canonicalize();
        Ok(f)
    }

    /// `∫ f` over the real line.
    pub fn integral(&self) -> Result<Q> {
        if !self.tail.is_zero() {
            return Err(Error::Domain("integral of a function with nonzero tail diverges".into()));
        }
        Ok(self.pieces.iter().enumerate().map(|(i, p)| p.integral().eval(&self.width(i))).fold(Q::zero(), |a, b| a + b))
    }

    /// `∫ |f|` for piecewise-constant `f` (exact); `None` otherwise.
    pub fn l1_norm_exact(&self) -> Option<Q> {
        if !self.is_compact() || !self.is_piecewise_constant() {
            return None;
        }
        Some(
            self.pieces
                .iter()
                .enumerate()
                .map(|(i, p)| p.constant_term().abs() * self.width(i))
                .fold(Q::zero(), |a, b| a + b),
        )
    }

    /// `f ∗ H_a` with `H_a = (1/a) χ_[0,a]`.
    pub fn convolve_box(&self, a: &Q) -> Result<Self> {
        if !a.is_positive() {
            return Err(Error::Domain(format!("box width must be positive, got {}", format_q(a))));
        }
        let g = self.antiderivative()?;
        let k = a.recip();
        let mk = -&k;
        Ok(g.combine(&k, &g.translate(a), &mk))
    }

    /// `f ∗ χ_[a,b]`.
    pub fn convolve_indicator(&self, a: &Q, b: &Q) -> Result<Self> {
        if a >= b {
            return Err(Error::Domain("empty interval".into()));
        }
        let w = b - a;
        Ok(self.convolve_box(&w)?.scale(&w).translate(a))
    }

    /// Samples `(x, f(x))` on `n + 1` equispaced points of `[lo, hi]`.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|k| {
                let x = if n == 0 { lo } else { lo + (hi - lo) * k as f64 / n as f64 };
                (x, self.eval_f64(x))
            })
            .collect()
    }

    pub fn to_csv(&self, lo: f64, hi: f64, n: usize) -> String {
        let mut s = String::from("x,f\n");
        for (x, y) in self.sample(lo, hi, n) {
            s.push_str(&format!("{x:.17e},{y:.17e}\n"));
        }
        s
    }
}

enum Loc {
    Before,
    Piece(usize),
    Tail,
}

fn scaled(p: &Poly, k: &Q) -> Poly {
    if k.is_one() {
        p.clone()
    } else {
        p.scale(k)
    }
}

/// Does `next` (in its own local coordinates) continue `prev` shifted by `h`?
fn continues(prev: &Poly, h: &Q, next: &Poly) -> bool {
    if prev.degree() != next.degree() || !prev.same_leading(next) {
        return false;
    }
    let (n, d) = prev.eval_frac(h);
    if !next.constant_is(&n, &d) {
        return false;
    }
    prev.taylor_shift(h) == *next
}

fn merge_sorted(a: &[Q], b: &[Q]) -> Vec<Q> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match crate::rational::q_cmp(&a[i], &b[j]) {
            Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i].clone());
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl fmt::Debug for PiecewisePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("Piecewise(0)");
        }
        writeln!(f, "Piecewise {{")?;
        for (i, p) in self.pieces.iter().enumerate() {
            writeln!(f, "  [{}, {}): {:?}", format_q(&self.breaks[i]), format_q(&self.breaks[i + 1]), p)?;
        }
        if !self.tail.is_zero() {
            writeln!(f, "  [{}, inf): {}", format_q(self.breaks.last().unwrap()), format_q(&self.tail))?;
        }
        f.write_str("}")
    }
}

#[derive(Serialize)]
struct PiecewiseView {
    breakpoints: Vec<String>,
    pieces: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail: Option<String>,
}

impl Serialize for PiecewisePolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PiecewiseView {
            breakpoints: self.breaks.iter().map(format_q).collect(),
            pieces: self.pieces.iter().map(|p| p.coeffs().iter().map(format_q).collect()).collect(),
            tail: (!self.tail.is_zero()).then(|| format_q(&self.tail)),
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn tent() -> PiecewisePolynomial {
        PiecewisePolynomial::from_global(
            vec![qi(0), qi(1), qi(2)],
            vec![Poly::t(), Poly::from_coeffs(vec![qi(2), qi(-1)])],
        )
        .unwrap()
    }

    #[test]
    fn box_has_unit_integral() {
        let b = PiecewisePolynomial::box_kernel(&q(1, 4)).unwrap();
        assert_eq!(b.integral().unwrap(), qi(1));
        assert!(PiecewisePolynomial::box_kernel(&qi(0)).is_err());
        assert!(PiecewisePolynomial::box_kernel(&qi(-1)).is_err());
    }

    #[test]
    fn box_convolved_with_itself_is_the_tent() {
        let b = PiecewisePolynomial::box_kernel(&qi(1)).unwrap();
        let t = b.convolve_box(&qi(1)).unwrap();
        assert_eq!(t, tent());
        assert_eq!(t.eval(&qi(1)), qi(1));
        assert_eq!(t.eval(&q(1, 2)), q(1, 2));
        assert_eq!(t.eval(&q(3, 2)), q(1, 2));
        assert_eq!(t.degree(), Some(1));
    }

    #[test]
    fn convolution_support_is_minkowski_sum() {
        let b = PiecewisePolynomial::box_kernel(&qi(1)).unwrap();
        let c = b.convolve_box(&q(1, 4)).unwrap();
        assert_eq!(c.support(), Some((qi(0), q(5, 4))));
        let t = tent();
        assert_eq!(t.convolve_box(&q(1, 4)).unwrap().integral().unwrap(), t.integral().unwrap());
    }

    #[test]
    fn derivative_of_tent_and_box() {
        let (d, j) = tent().differentiate();
        let want = PiecewisePolynomial::indicator(&qi(0), &qi(1))
            .unwrap()
            .sub(&PiecewisePolynomial::indicator(&qi(1), &qi(2)).unwrap());
        assert_eq!(d, want);
        assert!(j.is_empty());

        let (d, j) = PiecewisePolynomial::box_kernel(&qi(1)).unwrap().differentiate();
        assert!(d.is_zero());
        assert_eq!(j.locations, vec![qi(0), qi(1)]);
        assert_eq!(j.magnitudes, vec![qi(1), qi(-1)]);

        let (d, j) = PiecewisePolynomial::zero().differentiate();
        assert!(d.is_zero() && j.is_empty());
    }

    #[test]
    fn antiderivative_of_box_is_a_ramp() {
        let r = PiecewisePolynomial::box_kernel(&qi(1)).unwrap().antiderivative().unwrap();
        assert_eq!(r.eval(&q(1, 3)), q(1, 3));
        assert_eq!(r.eval(&qi(5)), qi(1));
        assert_eq!(r.eval(&qi(-1)), qi(0));
        assert!(!r.is_compact());

        let f = PiecewisePolynomial::indicator(&qi(0), &qi(1))
            .unwrap()
            .sub(&PiecewisePolynomial::indicator(&qi(2), &qi(3)).unwrap());
        let g = f.antiderivative().unwrap();
        assert!(g.is_compact());
        assert_eq!(g.support(), Some((qi(0), qi(3))));
        assert!(PiecewisePolynomial::zero().antiderivative().unwrap().is_zero());
    }

    #[test]
    fn canonical_form_merges_and_trims() {
        let f = PiecewisePolynomial::new(
            vec![qi(0), qi(1), qi(2), qi(3), qi(4)],
            vec![Poly::zero(), Poly::t(), Poly::from_coeffs(vec![qi(1), qi(1)]), Poly::zero()],
        )
        .unwrap();
        assert_eq!(f.breaks(), &[qi(1), qi(3)]);
        assert_eq!(f.num_pieces(), 1);
        let z = PiecewisePolynomial::linear_combine(&[qi(1), qi(-1)], &[tent(), tent()]).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn translate_and_eval_are_right_continuous() {
        let b = PiecewisePolynomial::indicator(&qi(0), &qi(1)).unwrap().translate(&qi(1));
        assert_eq!(b.support(), Some((qi(1), qi(2))));
        assert_eq!(b.eval(&qi(1)), qi(1));
        assert_eq!(b.eval(&qi(2)), qi(0));
    }

    #[test]
    fn invalid_construction_is_rejected() {
        assert!(PiecewisePolynomial::new(vec![qi(1), qi(0)], vec![Poly::t()]).is_err());
        assert!(PiecewisePolynomial::new(vec![qi(0), qi(1)], vec![]).is_err());
        assert!(PiecewisePolynomial::step(&qi(1), &qi(1), &qi(1)).is_err());
    }

    #[test]
    fn serializes_rationals_as_strings() {
        let s = serde_json::to_string(&PiecewisePolynomial::box_kernel(&q(1, 4)).unwrap()).unwrap();
        assert_eq!(s, r#"{"breakpoints":["0","1/4"],"pieces":[["4"]]}"#);
    }
}
