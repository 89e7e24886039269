use lieruin_core::lie_algebra::{build_generators, closure, commutator, same_span, DEFAULT_TOL};
use lieruin_core::numeric::{chebyshev_grid, integrate_adaptive, linspace};
use lieruin_core::passage::{
    assemble_system, constant_drift_solution, linear_system_residual, solve_bvp, DriftSpec, Estimand, JumpDirection,
    ModelSpec, PassageProblem,
};
use lieruin_core::phase_type::{matrix_exp, PhaseType};
use lieruin_core::riccati::{allen_stein_test, asymptotic_rate, k1, phi_k_closed_form, phi_k_eta, to_riccati, xbar};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coxian() -> impl Strategy<Value = PhaseType> {
    (1usize..=4)
        .prop_flat_map(|n| (prop::collection::vec(0.2f64..5.0, n), prop::collection::vec(0.05f64..1.0, n - 1)))
        .prop_map(|(rates, proceed)| PhaseType::coxian(&rates, &proceed).unwrap())
}

fn square(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
}

/// (K, λ, q, μ) with K < 1, K ≠ 0.
fn phi_k_params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-3.0f64..0.98, 0.05f64..5.0, 0.0f64..5.0, 0.1f64..5.0).prop_filter("K ≠ 0", |p| p.0.abs() > 1e-3)
}

proptest! {
    #[test]
    fn phase_type_tail_and_density(pt in coxian()) {
        prop_assert!(pt.validate().is_valid());
        prop_assert!((pt.tail(0.0).unwrap() - 1.0).abs() < 1e-12);
        let mut prev = 1.0 + 1e-12;
        for x in linspace(0.0, 6.0, 25) {
            let t = pt.tail(x).unwrap();
            prop_assert!(t <= prev && t >= -1e-15);
            prev = t;
            prop_assert!(pt.density(x).unwrap() >= -1e-14);
        }
        for x in [0.3, 1.1, 2.7] {
            let h = 1e-4;
            let fd = -(pt.tail(x + h).unwrap() - pt.tail(x - h).unwrap()) / (2.0 * h);
            prop_assert!((fd - pt.density(x).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn phase_type_mean_is_integrated_tail(pt in coxian()) {
        let r = integrate_adaptive(|x| pt.tail(x).unwrap(), 0.0, 200.0, 1e-10, 1e-10, 500);
        prop_assert!((r.value - pt.mean()).abs() < 1e-7 * pt.mean().max(1.0));
    }

    #[test]
    fn phase_type_json_round_trip(pt in coxian()) {
        let s = serde_json::to_string(&pt).unwrap();
        let back: PhaseType = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back.sub_generator(), pt.sub_generator());
        prop_assert_eq!(back.beta(), pt.beta());
    }

    #[test]
    fn positive_diagonal_is_rejected(n in 1usize..4, d in 0.0f64..3.0) {
        let mut b = -DMatrix::<f64>::identity(n, n);
        b[(n - 1, n - 1)] = d;
        let mut beta = vec![0.0; n];
        beta[0] = 1.0;
        prop_assert!(PhaseType::new(beta, b).is_err());
    }

    #[test]
    fn matrix_exp_semigroup(pt in coxian(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let b = pt.sub_generator();
        let lhs = matrix_exp(b, s + t).unwrap();
        let rhs = matrix_exp(b, s).unwrap() * matrix_exp(b, t).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn jacobi_identity(a in square(3), b in square(3), c in square(3)) {
        let br = |x: &DMatrix<f64>, y: &DMatrix<f64>| commutator(x, y).unwrap();
        let j = br(&a, &br(&b, &c)) + br(&b, &br(&c, &a)) + br(&c, &br(&a, &b));
        prop_assert!(j.norm() < 1e-10);
    }

    #[test]
    fn closure_idempotent_and_order_free(a in square(3), b in square(3), sa in 0.01f64..100.0, sb in 0.01f64..100.0) {
        let r = closure(&[a.clone(), b.clone()], DEFAULT_TOL, 9).unwrap();
        let again = closure(&r.basis, DEFAULT_TOL, 9).unwrap();
        prop_assert_eq!(again.dimension, r.dimension);
        let swapped = closure(&[&b * sb, &a * sa], DEFAULT_TOL, 9).unwrap();
        prop_assert_eq!(swapped.dimension, r.dimension);
        prop_assert!(same_span(&r.basis, &swapped.basis, 1e-7));
    }

    #[test]
    fn exponential_jump_algebra(lambda in 0.05f64..10.0, mu in 0.05f64..10.0, q in 0.01f64..20.0) {
        let model = |q: f64| ModelSpec::exponential(DriftSpec::constant(1.0).unwrap(), lambda, q, mu).unwrap();
        let (t1, t2) = build_generators(&model(0.0)).unwrap();
        let r = closure(&[t1, t2], DEFAULT_TOL, 16).unwrap();
        prop_assert_eq!(r.dimension, 2);
        prop_assert!(r.solvable);
        let (t1, t2) = build_generators(&model(q)).unwrap();
        let r = closure(&[t1, t2], DEFAULT_TOL, 16).unwrap();
        prop_assert_eq!(r.dimension, 4);
        prop_assert!(!r.solvable);
    }

    #[test]
    fn system_matches_generators(pt in coxian(), lambda in 0.1f64..5.0, q in 0.0f64..3.0, p in phi_k_params(), up in any::<bool>()) {
        let dir = if up { JumpDirection::Upward } else { JumpDirection::Downward };
        let drift = DriftSpec::segerdahl_family(p.0, p.1, p.2, p.3).unwrap();
        let m = ModelSpec::new(drift.clone(), lambda, q, pt, dir).unwrap();
        let sys = assemble_system(&m).unwrap();
        let (t1, t2) = build_generators(&m).unwrap();
        for x in [0.0, 0.7, 3.0] {
            let a = sys.matrix(x).unwrap();
            let scale = a.norm().max(1.0);
            prop_assert!((a - (&t1 * (lambda / drift.value(x)) + &t2)).norm() < 1e-14 * scale);
        }
    }

    #[test]
    fn constant_drift_closed_form_solves_system(lambda in 0.1f64..5.0, mu in 0.1f64..5.0, c in 0.1f64..5.0, q in 0.0f64..5.0) {
        let m = ModelSpec::exponential(DriftSpec::constant(c).unwrap(), lambda, q, mu).unwrap();
        let s = constant_drift_solution(&m).unwrap();
        let sys = assemble_system(&m).unwrap();
        let grid = linspace(0.0, 5.0, 11);
        let r = linear_system_residual(&sys, |x| s.eval(x).map(|(p, mm)| vec![p, mm]), &grid, 0.0).unwrap();
        prop_assert!(r.iter().all(|v| *v < 1e-8), "{:?}", r);
        prop_assert!(s.eta > 0.0 && s.eta <= 1.0);
    }

    #[test]
    fn phi_k_allen_stein_c1_zero((k, lambda, q, mu) in phi_k_params()) {
        let m = ModelSpec::exponential(DriftSpec::segerdahl_family(k, lambda, q, mu).unwrap(), lambda, q, mu).unwrap();
        let r = allen_stein_test(&to_riccati(&m).unwrap(), &chebyshev_grid(0.0, 4.0, 64)).unwrap();
        prop_assert!(r.integrable);
        prop_assert_eq!(r.params.unwrap().c1, 0.0);
    }

    #[test]
    fn normalized_riccati_equation_holds((k, lambda, q, mu) in phi_k_params(), x in 0.05f64..4.0) {
        // η̄ = (v/s)η solves dη̄/dx̄ = 1 − η̄²
        let s = (lambda / (lambda + q)).sqrt();
        let bar = |x: f64| {
            let v = (1.0 - k * (-2.0 * mu * x).exp()).sqrt();
            v / s * phi_k_eta(k, lambda, q, mu, x).unwrap()
        };
        let h = 1e-5 * x.max(1.0);
        let d_bar = (bar(x + h) - bar(x - h)) / (2.0 * h);
        let d_xbar = (xbar(x + h, k, lambda, q, mu).unwrap() - xbar(x - h, k, lambda, q, mu).unwrap()) / (2.0 * h);
        let lhs = d_bar / d_xbar;
        prop_assert!((lhs - (1.0 - bar(x) * bar(x))).abs() < 1e-6, "{} vs {}", lhs, 1.0 - bar(x) * bar(x));
        let e = (2.0 * xbar(x, k, lambda, q, mu).unwrap()).exp();
        let kk = k1(k, lambda, q);
        prop_assert!((bar(x) - (e - kk) / (e + kk)).abs() < 1e-9);
    }

    #[test]
    fn phi_k_asymptotic_slope((k, lambda, q, mu) in phi_k_params()) {
        prop_assume!(q > 0.05 * lambda);
        let rate = asymptotic_rate(lambda, q, mu);
        let x = 30.0 / mu;
        let h = 1e-4;
        let ln_psi = |x: f64| phi_k_closed_form(k, lambda, q, mu, x).unwrap().0.ln();
        let slope = (ln_psi(x + h) - ln_psi(x - h)) / (2.0 * h);
        prop_assert!((slope - rate).abs() < 0.01 * rate.abs(), "{} vs {}", slope, rate);
    }

    #[test]
    fn xbar_is_increasing_from_zero((k, lambda, q, mu) in phi_k_params()) {
        prop_assert_eq!(xbar(0.0, k, lambda, q, mu).unwrap(), 0.0);
        let xs: Vec<f64> = linspace(0.0, 5.0, 30).into_iter().map(|x| xbar(x, k, lambda, q, mu).unwrap()).collect();
        prop_assert!(xs.windows(2).all(|w| w[1] > w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bvp_ruin_is_monotone_with_exact_boundary(lambda in 0.2f64..3.0, mu in 0.5f64..4.0, c in 0.2f64..3.0, q in 0.0f64..2.0, n in 1usize..=3) {
        // net profit keeps the half-line problem well posed
        let pt = PhaseType::erlang(n, mu * n as f64).unwrap();
        prop_assume!(c > 1.1 * lambda * pt.mean() || q > 0.05);
        let m = ModelSpec::new(DriftSpec::constant(c).unwrap(), lambda, q, pt, JumpDirection::Downward).unwrap();
        let grid = linspace(0.0, 6.0, 25);
        let curve = solve_bvp(&m, &PassageProblem::ruin_below(0.0), &grid).unwrap();
        prop_assert!(curve.psi.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(curve.m[0].iter().all(|v| (v - 1.0).abs() < 1e-8));
        prop_assert!(curve.psi.iter().all(|p| *p >= -1e-10 && *p <= 1.0 + 1e-10));
    }

    #[test]
    fn bvp_two_sided_boundaries(lambda in 0.2f64..3.0, mu in 0.5f64..4.0, c in 0.2f64..3.0, q in 0.0f64..2.0, upper in 0.5f64..5.0) {
        let m = ModelSpec::exponential(DriftSpec::constant(c).unwrap(), lambda, q, mu).unwrap();
        let grid = linspace(0.0, upper, 9);
        let exit = solve_bvp(&m, &PassageProblem::two_sided(0.0, upper, Estimand::ExitAbove), &grid).unwrap();
        prop_assert!(exit.m[0][0].abs() < 1e-8 && (exit.psi[8] - 1.0).abs() < 1e-8);
        let ruin = solve_bvp(&m, &PassageProblem::two_sided(0.0, upper, Estimand::RuinBelow), &grid).unwrap();
        prop_assert!((ruin.m[0][0] - 1.0).abs() < 1e-8 && ruin.psi[8].abs() < 1e-8);
        for j in 0..grid.len() {
            prop_assert!(exit.psi[j] + ruin.psi[j] <= 1.0 + 1e-8);
        }
    }
}
