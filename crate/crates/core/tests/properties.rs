use approx::assert_relative_eq;
use proptest::prelude::*;

use priorci::bsfun::{even_knots, standard_multiplier, BSFunctions, IntervalShape, TransitionBs};
use priorci::dist::{normal_cdf, psi, t_cdf, t_quantile};
use priorci::perfeval::{coverage, objective, scaled_expected_length, EvalSettings};
use priorci::DegreesOfFreedom;

fn dof_strategy() -> impl Strategy<Value = DegreesOfFreedom> {
    prop_oneof![(1u32..200).prop_map(DegreesOfFreedom::Finite), Just(DegreesOfFreedom::Infinite),]
}

/// Knots `0..d` with interior b values in [-2, 2] and s values in [0.5 t, 1.5 t].
fn bs_strategy() -> impl Strategy<Value = BSFunctions> {
    (dof_strategy(), 2.0f64..8.0, 2usize..8).prop_flat_map(|(dof, d, n)| {
        let t = standard_multiplier(0.05, dof).unwrap();
        (proptest::collection::vec(-2.0f64..2.0, n - 1), proptest::collection::vec(0.5 * t..1.5 * t, n))
            .prop_map(move |(b, s)| {
                BSFunctions::build(d, &even_knots(d, n).unwrap(), &b, &s, 0.05, dof).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normal_cdf_is_symmetric(x in -30.0f64..30.0) {
        prop_assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psi_is_a_probability(x in -5.0f64..5.0, width in 0.0f64..5.0, mu in -3.0f64..3.0, v in 0.01f64..4.0) {
        let p = psi(x, x + width, mu, v).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(psi(x + width, x, mu, v).is_err() || width == 0.0);
    }

    #[test]
    fn t_quantile_inverts_cdf(p in 0.001f64..0.999, dof in dof_strategy()) {
        let q = t_quantile(p, dof).unwrap();
        assert_relative_eq!(t_cdf(q, dof), p, max_relative = 1e-10);
    }

    #[test]
    fn b_is_odd_and_vanishes_beyond_d(bs in bs_strategy(), u in 0.0f64..1.5) {
        let x = u * bs.cutoff();
        prop_assert_eq!(bs.b(x), -bs.b(-x));
        if x >= bs.cutoff() {
            prop_assert_eq!(bs.b(x), 0.0);
            prop_assert_eq!(bs.s(x), bs.s_end());
        }
    }

    #[test]
    fn document_round_trip_is_exact(bs in bs_strategy()) {
        let text = serde_json::to_string(&bs).unwrap();
        let back: BSFunctions = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.b_values(), bs.b_values());
        prop_assert_eq!(back.s_values(), bs.s_values());
        prop_assert_eq!(back.knots(), bs.knots());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coverage_is_even_and_bounded(bs in bs_strategy(), gamma in 0.0f64..8.0, rho in -0.95f64..0.95) {
        let settings = EvalSettings::default();
        let c = coverage(gamma, &bs, rho, &settings).unwrap();
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&c), "{}", c);
        let c_neg = coverage(-gamma, &bs, rho, &settings).unwrap();
        prop_assert!((c - c_neg).abs() < 1e-10);
        let e = scaled_expected_length(gamma, &bs, &settings).unwrap();
        prop_assert!(e > 0.0);
        prop_assert!((e - scaled_expected_length(-gamma, &bs, &settings).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn objective_is_affine_in_s(bs in bs_strategy(), lambda in 0.0f64..2.0) {
        // halfway between bs and the standard interval
        let t = bs.s_end();
        let zeros = vec![0.0; bs.b_values().len()];
        let mid_s: Vec<f64> = bs.s_values().iter().map(|s| 0.5 * (s + t)).collect();
        let mid = bs.with_values(&zeros, &mid_s).unwrap();
        let settings = EvalSettings::default();
        let full = objective(&bs, lambda, &settings).unwrap();
        let half = objective(&mid, lambda, &settings).unwrap();
        prop_assert!((half - 0.5 * full).abs() < 1e-12 * (1.0 + full.abs()));
    }
}

#[test]
fn transition_family_limits() {
    let rho = -std::f64::consts::FRAC_1_SQRT_2;
    let z = standard_multiplier(0.05, DegreesOfFreedom::Infinite).unwrap();
    let step = TransitionBs::new(std::sync::Arc::new(|x: f64| (x / 3.0).min(1.0)), rho, 0.05, None).unwrap();
    assert_relative_eq!(step.s(0.0), (1.0 - rho * rho).sqrt() * z, epsilon = 1e-14);
    assert_relative_eq!(step.s(5.0), z, epsilon = 1e-14);
    assert_eq!(step.b(5.0), 0.0);
}
