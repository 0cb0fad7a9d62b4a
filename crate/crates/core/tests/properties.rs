use proptest::prelude::*;

use beurling_lab::asymptotics::{TGrid, Verdict, XSchedule};
use beurling_lab::brv::{self, RatioField};
use beurling_lab::flow;
use beurling_lab::funcspace::{builtin_family, parse_expr, Expr, FamilySpec, Func, RealFunc};
use beurling_lab::interp;
use beurling_lab::represent::{self, GammaRepresentation};
use beurling_lab::sn_check;

fn fam(s: FamilySpec) -> RealFunc {
    builtin_family(s).unwrap()
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::X),
        (-5.0f64..5.0).prop_map(|c| Expr::Const((c * 8.0).round() / 8.0)),
        (0.001f64..100.0).prop_map(Expr::Const),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), -2.0f64..2.0).prop_map(|(a, p)| Expr::Pow(Box::new(a), Box::new(Expr::Const(p)))),
            inner.clone().prop_map(|a| Expr::Call(Func::Exp, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Log, Box::new(a))),
            inner.prop_map(|a| Expr::Call(Func::Sqrt, Box::new(a))),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_evaluates_identically(e in expr_strategy()) {
        let text = e.to_string();
        let back = Expr::parse(&text).unwrap();
        for i in 0..100 {
            let x = 0.05 + i as f64 * 0.37;
            prop_assert!(same(e.eval(x), back.eval(x)), "{text} at {x}: {} vs {}", e.eval(x), back.eval(x));
        }
    }

    #[test]
    fn positive_flag_never_yields_non_positive(e in expr_strategy(), x in 0.01f64..1e3) {
        let f = RealFunc::from_expr(e, "f").positive();
        if let Ok(v) = f.eval(x) {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn ratio_field_is_one_at_zero(a in 0.0f64..0.99, b in -3.0f64..3.0, x in 1.0f64..1e12) {
        let f = parse_expr(&format!("exp({b:?}*x^{a:?})")).unwrap().positive();
        let field = RatioField::new(f, fam(FamilySpec::PowerAlpha { alpha: a }));
        prop_assert_eq!(field.sigma(0.0, x).unwrap(), 1.0);
    }

    #[test]
    fn scaling_f_leaves_ratios_unchanged(c in 1e-3f64..1e3, t in -1.0f64..1.0, x in 10.0f64..1e8) {
        let phi = fam(FamilySpec::PowerAlpha { alpha: 0.5 });
        let f = parse_expr("exp(sqrt(x))*(1+1/x)").unwrap().positive();
        let a = RatioField::new(f.clone(), phi.clone()).sigma(t, x).unwrap();
        let b = RatioField::new(f.scaled(c).unwrap(), phi).sigma(t, x).unwrap();
        // the constant cancels up to rounding of the two products
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
    }

    #[test]
    fn near_associativity_is_an_identity(x in 10.0f64..1e7, s in -1.0f64..1.0, t in -1.0f64..1.0, alpha in 0.0f64..0.95) {
        let phi = fam(FamilySpec::PowerAlpha { alpha });
        let d = flow::near_assoc(&phi, x, s, t, None).unwrap();
        prop_assert!((d.lhs - d.rhs).abs() <= 8.0 * f64::EPSILON * d.lhs);
        prop_assert!(d.concat_residual <= 8.0 * f64::EPSILON);
    }

    #[test]
    fn flow_is_a_semigroup(x in 1.0f64..1e4, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let phi = fam(FamilySpec::PowerAlpha { alpha: 0.7 });
        let whole = flow::flow_map(&phi, s + t, x, 1e-11).unwrap();
        let split = flow::flow_map(&phi, t, flow::flow_map(&phi, s, x, 1e-11).unwrap(), 1e-11).unwrap();
        prop_assert!((whole - split).abs() <= 1e-6 * whole.max(1.0));
    }

    #[test]
    fn reach_time_matches_quadrature(a in 1.0f64..5e3, span in 1.0f64..5e3, which in 0usize..4) {
        let phi = catalog()[which].clone();
        let b = a + span;
        let reach = flow::reach_time(&phi, a, b, 1e-11).unwrap();
        let tau = flow::time_measure(&phi, b, 1e-11).unwrap() - flow::time_measure(&phi, a, 1e-11).unwrap();
        prop_assert!((reach - tau).abs() <= 1e-6, "{} {a} -> {b}: {reach} vs {tau}", phi.label());
    }

    #[test]
    fn refining_the_grid_never_lowers_deviations(alpha in 0.0f64..0.95, step in prop::sample::select(vec![0.5, 0.25, 0.2, 0.1])) {
        let phi = fam(FamilySpec::PowerAlpha { alpha });
        let sched = XSchedule::new(10.0, 4.0, 8).unwrap();
        let grid = TGrid::new(-1.0, 2.0, step).unwrap();
        let coarse = sn_check::check_sn(&phi, &grid, &sched, 1e-2).unwrap();
        let fine = sn_check::check_sn(&phi, &grid.refined(), &sched, 1e-2).unwrap();
        for (c, f) in coarse.report.per_x.iter().zip(&fine.report.per_x) {
            prop_assert!(f.sup_deviation >= c.sup_deviation);
        }
    }

    #[test]
    fn pass_means_final_deviation_within_tolerance(alpha in 0.0f64..0.99, tol in 1e-4f64..1e-1) {
        let phi = fam(FamilySpec::PowerAlpha { alpha });
        let v = sn_check::check_sn(&phi, &TGrid::default(), &XSchedule::default(), tol).unwrap();
        if v.report.verdict == Verdict::Pass {
            prop_assert!(v.report.last_deviation() <= tol);
        }
    }

    #[test]
    fn sn_implies_phi_slow_and_little_o(alpha in 0.0f64..0.99, tol in 1e-3f64..1e-1) {
        let phi = fam(FamilySpec::PowerAlpha { alpha });
        let sched = XSchedule::default();
        if sn_check::check_sn(&phi, &TGrid::default(), &sched, tol).unwrap().passed() {
            prop_assert!(sn_check::check_phi_slow(&phi, &phi, &TGrid::default(), &sched, tol).unwrap().passed());
            prop_assert!(sn_check::check_little_o(&phi, &sched, 10.0 * tol).unwrap().passed());
        }
    }

    #[test]
    fn smooth_interpolant_is_c1_and_bounded(x1 in 1.0f64..50.0, alpha in 0.1f64..0.9, seed in 0u64..1000) {
        let phi = fam(FamilySpec::PowerAlpha { alpha });
        let part = interp::bloom_partition(&phi, x1, f64::INFINITY, 200).unwrap();
        let psi = parse_expr("sqrt(x)*(1+1/x)").unwrap().positive();
        let ip = interp::interpolate_c1(&psi, &part).unwrap();
        for n in 0..part.knots.len() {
            prop_assert_eq!(ip.knot_derivatives(n), (0.0, 0.0));
        }
        let i = (seed as usize) % (part.knots.len() - 1);
        let x = 0.5 * (part.knots[i] + part.knots[i + 1]);
        prop_assert!(ip.between_neighbours(x).unwrap());
        prop_assert!(ip.derivative(x).unwrap().abs() <= ip.slope_bounds[i] * (1.0 + 1e-12));
        prop_assert!(ip.measured_slope_constant(7) <= 1.5 + 1e-12);
    }
}

fn catalog() -> Vec<RealFunc> {
    vec![
        fam(FamilySpec::ConstC { c: 1.0 }),
        fam(FamilySpec::PowerAlpha { alpha: 0.5 }),
        fam(FamilySpec::PowerAlpha { alpha: 0.7 }),
        fam(FamilySpec::XOverLog),
    ]
}

#[test]
fn symbolic_and_numeric_derivatives_agree() {
    let smooth = ["sqrt(x)", "x^0.7", "x/log(x)", "log(log(x)+1)", "log(x)*x", "1+1/x"];
    for text in smooth {
        let f = parse_expr(text).unwrap();
        for i in 0..=60 {
            let x = 10f64.powf(0.1 * i as f64).max(1.5);
            let s = f.derivative(x).unwrap();
            let n = f.numeric_derivative(x).unwrap();
            // scale by |f|/x too: a nearly flat f leaves differences only that much room
            let scale = s.abs().max(f.eval(x).unwrap().abs() / x);
            assert!((s - n).abs() <= 1e-6 * scale, "{text} at {x}: {s} vs {n}");
        }
    }
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let phi = fam(FamilySpec::XOverLog);
    let f = represent::make_f_rho(0.5, &phi).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let est = brv::estimate_index(&f, &phi, &TGrid::default(), &XSchedule::default()).unwrap();
            let uct = brv::uct_profile(&f, &phi, est.rho, &TGrid::default(), &XSchedule::default(), 1e-2);
            serde_json::to_string(&(est, uct)).unwrap()
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
}

#[test]
fn f_rho_matches_closed_forms() {
    for rho in [-1.0, 0.5, 2.0] {
        let cases: [(RealFunc, Box<dyn Fn(f64) -> f64>); 3] = [
            (fam(FamilySpec::ConstC { c: 1.0 }), Box::new(move |x| rho * (x - 1.0))),
            (fam(FamilySpec::PowerAlpha { alpha: 0.5 }), Box::new(move |x: f64| 2.0 * rho * (x.sqrt() - 1.0))),
            (fam(FamilySpec::IdentityX), Box::new(move |x: f64| rho * x.ln())),
        ];
        for (phi, ln) in cases {
            let f = represent::make_f_rho(rho, &phi).unwrap();
            assert_eq!(f.eval(1.0).unwrap(), 1.0);
            for x in [0.5, 2.0, 37.0, 1e4, 3e7] {
                let want = ln(x);
                let got = f.ln_eval(x).unwrap();
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{} rho {rho} x {x}: {got} vs {want}", phi.label());
            }
        }
    }
}

#[test]
fn uct_passes_for_f_rho_on_power_catalog() {
    for phi in [fam(FamilySpec::ConstC { c: 1.0 }), fam(FamilySpec::PowerAlpha { alpha: 0.5 })] {
        for rho in [-1.0, 0.5, 2.0] {
            let f = represent::make_f_rho(rho, &phi).unwrap();
            let r = brv::uct_profile(&f, &phi, rho, &TGrid::default(), &XSchedule::default(), 1e-2);
            assert_eq!(r.verdict, Verdict::Pass, "{} rho {rho}: {:?}", phi.label(), r.per_x.last());
        }
    }
}

#[test]
fn uct_passes_for_slow_catalog_on_long_schedule() {
    // phi'(x) decays like x^-0.3 and 1/log x, so these need x far past 1e7.
    // ln f for x^0.7 grows like x^0.3, so its ratios lose all precision long before 1e150.
    let k = TGrid::new(-1.0, 1.0, 0.1).unwrap();
    for (phi, sched) in [
        (fam(FamilySpec::PowerAlpha { alpha: 0.7 }), XSchedule::new(100.0, 10.0, 29).unwrap()),
        (fam(FamilySpec::XOverLog), XSchedule::new(100.0, 10.0, 149).unwrap()),
    ] {
        for rho in [-1.0, 0.5, 2.0] {
            let f = represent::make_f_rho(rho, &phi).unwrap();
            let r = brv::uct_profile(&f, &phi, rho, &k, &sched, 1e-2);
            assert_eq!(r.verdict, Verdict::Pass, "{} rho {rho}: {:?}", phi.label(), r.per_x.last());
        }
    }
}

#[test]
fn index_is_stable_under_slowly_varying_factors() {
    let phi = fam(FamilySpec::PowerAlpha { alpha: 0.5 });
    let slow = parse_expr("2+1/log(x+1)").unwrap().positive();
    for rho in [-1.0, 0.5, 2.0] {
        let f = represent::make_f_rho(rho, &phi).unwrap();
        let a = brv::estimate_index(&f, &phi, &TGrid::default(), &XSchedule::default()).unwrap();
        let b = brv::estimate_index(&f.product(&slow), &phi, &TGrid::default(), &XSchedule::default()).unwrap();
        assert!((a.rho - b.rho).abs() <= 1e-2, "rho {rho}: {} vs {}", a.rho, b.rho);
    }
}

#[test]
fn cocycle_defect_decays_for_sn_catalog() {
    let k = TGrid::new(-1.0, 1.0, 0.25).unwrap();
    let sched = XSchedule::default();
    let zero = brv::cocycle_profile(&RatioField::of_phi(fam(FamilySpec::ConstC { c: 3.0 })), &k, &sched, 1e-2);
    assert!(zero.per_x.iter().all(|p| p.sup_deviation == 0.0));
    for phi in catalog().into_iter().skip(1) {
        let r = brv::cocycle_profile(&RatioField::of_phi(phi.clone()), &k, &sched, 1e-2);
        let first = r.per_x.iter().find(|p| p.sup_deviation.is_finite()).unwrap().sup_deviation;
        assert!(r.last_deviation() < first, "{}", phi.label());
        assert!(r.last_deviation() < 1e-2, "{}", phi.label());
    }
}

#[test]
fn karamata_additive_for_bounded_below_catalog() {
    let shifts = TGrid::new(-1.0, 1.0, 0.25).unwrap();
    let sched = XSchedule::default();
    for phi in [fam(FamilySpec::ConstC { c: 0.5 }), fam(FamilySpec::XOverLog)] {
        let v = sn_check::check_karamata_additive(&phi, &shifts, &sched, 1e-2).unwrap();
        assert!(v.passed(), "{}", phi.label());
        assert!(v.lower_bound.unwrap() > 0.0);
    }
}

#[test]
fn phi_slow_verdict_survives_asymptotic_equivalence() {
    let phi = fam(FamilySpec::PowerAlpha { alpha: 0.5 });
    let sched = XSchedule::default();
    for text in ["log(x+1)", "x^0.25", "x", "x^2"] {
        let a = parse_expr(text).unwrap().positive();
        let b = a.product(&parse_expr("1+1/x").unwrap().positive());
        let va = sn_check::check_phi_slow(&a, &phi, &TGrid::default(), &sched, 1e-2).unwrap();
        let vb = sn_check::check_phi_slow(&b, &phi, &TGrid::default(), &sched, 1e-2).unwrap();
        assert_eq!(va.report.verdict, vb.report.verdict, "{text}");
    }
}

#[test]
fn representation_round_trip_recovers_index() {
    let d = parse_expr("1+1/x").unwrap().positive();
    let e = parse_expr("1/(1+x)").unwrap();
    for phi in [fam(FamilySpec::ConstC { c: 1.0 }), fam(FamilySpec::PowerAlpha { alpha: 0.5 }), fam(FamilySpec::PowerAlpha { alpha: 0.7 }), fam(FamilySpec::XOverLog)] {
        for rho in [-1.0, 0.5, 2.0] {
            let f = represent::build_gamma(&GammaRepresentation::new(rho, phi.clone(), d.clone(), e.clone())).unwrap();
            let est = brv::estimate_index(&f, &phi, &TGrid::default(), &XSchedule::default()).unwrap();
            assert!((est.rho - rho).abs() <= 2e-2, "{} rho {rho}: {}", phi.label(), est.rho);
        }
    }
}

#[test]
fn decompose_extract_rebuild_matches_f() {
    let sched = XSchedule::default();
    let xs = sched.points();
    for (phi, f) in [
        (fam(FamilySpec::PowerAlpha { alpha: 0.5 }), parse_expr("exp(2*(sqrt(x)-1))*(1+1/x)").unwrap().positive()),
        (fam(FamilySpec::PowerAlpha { alpha: 0.7 }), parse_expr("exp(-(x^0.3-1)/0.3)*(3+1/sqrt(x))").unwrap().positive()),
    ] {
        let rho = brv::estimate_index(&f, &phi, &TGrid::default(), &sched).unwrap().rho;
        let dec = represent::decompose(&f, &phi, rho).unwrap();
        let part = interp::bloom_partition(&phi, 1.0, sched.last(), 1_000_000).unwrap();
        let ex = represent::extract_components(&dec, &part).unwrap();
        let g = represent::build_gamma(&ex.representation).unwrap();
        for &x in &xs[xs.len() / 2..] {
            let rel = (g.ln_eval(x).unwrap() - f.ln_eval(x).unwrap()).exp_m1().abs();
            assert!(rel <= 1e-2, "{} at {x}: {rel}", f.label());
        }
    }
}

#[test]
fn zero_index_decomposition_of_phi() {
    let sched = XSchedule::default();
    for phi in [fam(FamilySpec::PowerAlpha { alpha: 0.5 }), fam(FamilySpec::PowerAlpha { alpha: 0.7 })] {
        let dec = represent::decompose(&phi, &phi, 0.0).unwrap();
        let part = interp::bloom_partition(&phi, 1.0, 1.1 * sched.last(), 1_000_000).unwrap();
        let ex = represent::extract_components(&dec, &part).unwrap();
        let n = ex.c_samples.len();
        let (c_mid, c_end) = (ex.c_samples[n / 2].1, ex.c_samples[n - 1].1);
        assert!((c_mid - c_end).abs() < 1e-2, "{}: c drifts {c_mid} -> {c_end}", phi.label());
        let r = represent::verify_reduction(&ex.representation.e_component, &phi, &TGrid::default(), &sched, 1e-2);
        assert_eq!(r.verdict, Verdict::Pass, "{}", phi.label());
    }
}

#[test]
fn slow_part_is_multiplicatively_slow_when_phi_bounded_below() {
    let shifts = TGrid::new(-1.0, 1.0, 0.25).unwrap();
    let sched = XSchedule::default();
    for phi in [fam(FamilySpec::ConstC { c: 1.0 }), fam(FamilySpec::PowerAlpha { alpha: 0.5 })] {
        let f = represent::make_f_rho(1.0, &phi).unwrap().product(&parse_expr("2+1/x").unwrap().positive());
        let dec = represent::decompose(&f, &phi, 1.0).unwrap();
        let slow = dec.slow_part();
        // Karamata: slow(lambda x)/slow(x) -> 1 for lambda in [1/2, 2]
        let lambdas = [0.5, 0.75, 1.5, 2.0];
        let mut last = f64::INFINITY;
        for x in sched.points().into_iter().skip(10) {
            let dev = lambdas
                .iter()
                .map(|l| (slow.ln_eval(l * x).unwrap() - slow.ln_eval(x).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(dev <= last + 1e-12);
            last = dev;
        }
        assert!(last < 1e-2, "{}", phi.label());
        let v = sn_check::check_karamata_additive(&slow, &shifts, &sched, 1e-2).unwrap();
        assert!(v.passed());
    }
}
