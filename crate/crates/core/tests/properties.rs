use carleman::piecewise::{lp_quasinorm_default, sup_norm};
use carleman::poly::Poly;
use carleman::rational::{q, qi};
use carleman::tower::{build_tower, check_c_condition, rectangle_form, top_derivative, DecaySequence};
use carleman::weights::{
    build_minorant, mu_classify, p_regularity_report, shift, super_quadratic_check, verify_minorant, WeightSequence,
};
use carleman::{GrowthPoly, PiecewisePolynomial, Real, Q};
use num_traits::Signed;
use proptest::prelude::*;

fn rat() -> impl Strategy<Value = Q> {
    (-40i64..=40, 1i64..=12).prop_map(|(n, d)| q(n, d))
}

fn pos_rat() -> impl Strategy<Value = Q> {
    (1i64..=30, 1i64..=12).prop_map(|(n, d)| q(n, d))
}

/// Piecewise-constant function on `[x0, x0 + Σ widths]`.
fn step_fn() -> impl Strategy<Value = PiecewisePolynomial> {
    (rat(), prop::collection::vec((pos_rat(), rat()), 1..6)).prop_map(|(x0, cells)| {
        let mut breaks = vec![x0];
        let mut pieces = Vec::new();
        for (w, c) in cells {
            let next = breaks.last().unwrap() + w;
            breaks.push(next);
            pieces.push(Poly::constant(c));
        }
        PiecewisePolynomial::new(breaks, pieces).unwrap()
    })
}

fn poly_fn() -> impl Strategy<Value = PiecewisePolynomial> {
    (rat(), prop::collection::vec((pos_rat(), prop::collection::vec(rat(), 1..4)), 1..4)).prop_map(|(x0, cells)| {
        let mut breaks = vec![x0];
        let mut pieces = Vec::new();
        for (w, c) in cells {
            let next = breaks.last().unwrap() + w;
            breaks.push(next);
            pieces.push(Poly::from_coeffs(c));
        }
        PiecewisePolynomial::new(breaks, pieces).unwrap()
    })
}

fn exponent() -> impl Strategy<Value = Q> {
    prop::sample::select(vec![q(3, 10), q(1, 2), q(7, 10), q(1, 3), q(2, 3)])
}

fn geometric() -> impl Strategy<Value = DecaySequence> {
    ((1i64..=9, 1i64..=9), prop::sample::select(vec![4i64, 8, 16]))
        .prop_map(|((n, d), r)| DecaySequence::geometric(q(n, d), q(1, r)).unwrap())
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn quasi_triangle_on_step_pairs(f in step_fn(), g in step_fn(), p in exponent()) {
        let nf = lp_quasinorm_default(&f, &p).unwrap();
        let ng = lp_quasinorm_default(&g, &p).unwrap();
        let ns = lp_quasinorm_default(&f.add(&g), &p).unwrap();
        match (&ns.exact_pth_power, &nf.exact_pth_power, &ng.exact_pth_power) {
            (Some(s), Some(a), Some(b)) => prop_assert!(s <= &(a + b)),
            _ => {
                let slack = ns.pth_power.clone() - nf.pth_power.clone() - ng.pth_power.clone();
                prop_assert!(slack.to_f64() <= 1e-12);
            }
        }
    }

    #[test]
    fn p_homogeneity_of_step_functions(f in step_fn(), c in rat(), p in exponent()) {
        let lhs = lp_quasinorm_default(&f.scale(&c), &p).unwrap().value.to_f64();
        let rhs = carleman::rational::to_f64(&c.abs()) * lp_quasinorm_default(&f, &p).unwrap().value.to_f64();
        prop_assert!(rel_close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn translation_leaves_norms_invariant(f in poly_fn(), s in rat(), p in exponent()) {
        let g = f.translate(&s);
        let (a, b) = (sup_norm(&f), sup_norm(&g));
        prop_assert_eq!(a.exact, b.exact);
        if a.exact {
            prop_assert_eq!(&a.upper, &b.upper);
        }
        let na = lp_quasinorm_default(&f, &p).unwrap().value.to_f64();
        let nb = lp_quasinorm_default(&g, &p).unwrap().value.to_f64();
        prop_assert!(rel_close(na, nb, 1e-8), "{na} vs {nb}");
    }

    #[test]
    fn differentiate_inverts_antiderivative(f in poly_fn()) {
        let (d, _) = f.antiderivative().unwrap().differentiate();
        prop_assert_eq!(d, f);
    }

    #[test]
    fn convolve_box_keeps_integral_and_raises_degree(f in poly_fn(), a in pos_rat()) {
        let g = f.convolve_box(&a).unwrap();
        prop_assert_eq!(g.integral().unwrap(), f.integral().unwrap());
        if !f.is_zero() {
            prop_assert_eq!(g.degree(), f.degree().map(|d| d + 1));
        }
    }

    #[test]
    fn taylor_shift_matches_evaluation(c in prop::collection::vec(rat(), 1..6), h in rat(), x in rat()) {
        let p = Poly::from_coeffs(c);
        prop_assert_eq!(p.taylor_shift(&h).eval(&x), p.eval(&(&x + &h)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn top_derivative_is_n_fold_derivative(a in geometric(), n in 0usize..=5) {
        let tower = build_tower(&a, n).unwrap();
        let closed = top_derivative(&a, n).unwrap();
        prop_assert_eq!(&closed.to_piecewise(), tower.derivative(n));
        let (derived, _) = tower.realization().differentiate_n(n);
        prop_assert_eq!(&derived, tower.derivative(n));
    }

    #[test]
    fn tower_support_is_sum_of_widths(a in geometric(), n in 0usize..=6) {
        let tower = build_tower(&a, n).unwrap();
        let total = (0..=n).map(|j| a.a(j)).fold(Q::from_integer(0.into()), |x, y| x + y);
        prop_assert_eq!(tower.realization().support(), Some((Q::from_integer(0.into()), total)));
        prop_assert_eq!(tower.realization().integral().unwrap(), qi(1));
    }

    #[test]
    fn c_condition_gives_disjoint_rectangles(r in 3i64..=20, n in 1usize..=6) {
        let a = DecaySequence::geometric(qi(1), q(1, r)).unwrap();
        let cc = check_c_condition(&a);
        prop_assert!(cc.c.is_some());
        prop_assert!(rectangle_form(&a, n).disjoint);
    }

    #[test]
    fn weight_partial_sums_nondecreasing(
        kind in 0usize..3,
        kappa in (1i64..=8, 1i64..=4),
        s in prop::sample::select(vec![q(1, 2), qi(1), qi(2)]),
        p in exponent(),
    ) {
        let k = q(kappa.0, kappa.1);
        let m = match kind {
            0 => WeightSequence::geometric_exponential(k, p, 40),
            1 => WeightSequence::tempered(k, s, p, 40),
            _ => WeightSequence::power(k, s, p, 40),
        }.unwrap();
        let sums = mu_classify(&m, 40).unwrap().partial_sums;
        prop_assert!(!sums[0].is_negative());
        for w in sums.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn shift_preserves_verdicts(
        kind in 0usize..3,
        kappa in (1i64..=8, 1i64..=4),
        s in prop::sample::select(vec![q(1, 2), qi(1), qi(2)]),
        i in 1usize..=4,
    ) {
        let k = q(kappa.0, kappa.1);
        let p = q(1, 2);
        let m = match kind {
            0 => WeightSequence::geometric_exponential(k, p, 64),
            1 => WeightSequence::tempered(k, s, p, 64),
            _ => WeightSequence::power(k, s, p, 64),
        }.unwrap();
        let mi = shift(&m, i).unwrap();
        let a = p_regularity_report(&m, 40).unwrap();
        let b = p_regularity_report(&mi, 40).unwrap();
        prop_assert_eq!(a.mu_verdict, b.mu_verdict);
        prop_assert_eq!(a.regularity_branch, b.regularity_branch);
    }

    #[test]
    fn minorant_invariants_hold(kappa in 1i64..=4, eps_den in prop::sample::select(vec![10i64, 100, 1000])) {
        let m = WeightSequence::tempered(qi(kappa), qi(1), q(1, 2), 64).unwrap();
        let poly = GrowthPoly::default_quadratic();
        let eps = q(1, eps_den);
        let r = build_minorant(&m, &poly, &eps, 64).unwrap();
        prop_assert!(r.checks.all());
        prop_assert!(verify_minorant(&r.n, &m, &poly, &eps, 64).all());
    }

    #[test]
    fn smaller_growth_poly_finds_earlier_n0(c0 in 0i64..=20, kappa in 1i64..=4) {
        let m = WeightSequence::tempered(qi(kappa), qi(1), q(1, 2), 64).unwrap();
        let big = GrowthPoly::default_quadratic();
        let small = GrowthPoly(vec![qi(1 - c0), qi(1), qi(1)]);
        let eps = q(1, 100);
        let a = super_quadratic_check(&m, &big, &eps, 64).unwrap();
        let b = super_quadratic_check(&m, &small, &eps, 64).unwrap();
        if let Some(n0) = a.n0 {
            prop_assert!(b.n0.is_some_and(|m0| m0 <= n0));
        }
    }
}

#[test]
fn zero_has_zero_norm() {
    let v = lp_quasinorm_default(&PiecewisePolynomial::zero(), &q(1, 2)).unwrap();
    assert_eq!(v.value, Real::zero());
}
