use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maskbc::coding::{coefficients_from_joint, derive_coefficients, inner_region, state_v_given_y2, u_given_y1_logdets};
use maskbc::extremal::{enhanced_channel, solve_gaussian_subproblem, verify_preservation, STATIONARITY_TOL};
use maskbc::instances::{random_spd, random_spec, random_strategy};
use maskbc::mcval::sample_joint;
use maskbc::model::{build_joint, labels, validate};
use maskbc::optimize::{maximize_weighted, FrontierQuery, BUDGET_TOL};
use maskbc::region::{eval_region, leakage_lower_bound, weighted_sum_upper};
use maskbc::{matcore::max_abs, ChannelSpec, Strategy, User};

fn instance(seed: u64, t: usize, degraded: bool) -> (ChannelSpec, Strategy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng, t, degraded);
    let strat = random_strategy(&mut rng, &spec);
    (spec, strat)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_is_psd_and_consistent(seed in any::<u64>(), t in 1usize..=4, degraded in any::<bool>()) {
        let (spec, strat) = instance(seed, t, degraded);
        let joint = build_joint(&spec, &strat, &derive_coefficients(&spec, &strat).unwrap()).unwrap();
        prop_assert!(joint.cov().is_psd(1e-9));
        let kx = joint.sub_cov(&[labels::X]).unwrap();
        prop_assert!(max_abs(&(kx.as_matrix() - spec.k().as_matrix())) < 1e-10);
        for (s, sig) in [(labels::S1, &strat.sigma_xs1), (labels::S2, &strat.sigma_xs2)] {
            let c = joint.cross_cov(&[labels::X], &[s]).unwrap();
            prop_assert!(max_abs(&(c - sig)) < 1e-12);
        }
    }

    #[test]
    fn coding_construction_matches_closed_form(seed in any::<u64>(), t in 1usize..=4, degraded in any::<bool>()) {
        let (spec, strat) = instance(seed, t, degraded);
        let coeffs = derive_coefficients(&spec, &strat).unwrap();
        let joint = build_joint(&spec, &strat, &coeffs).unwrap();
        let inner = inner_region(&spec, &strat).unwrap().as_array();
        let outer = eval_region(&spec, &strat).unwrap().as_array();
        for (a, b) in inner.iter().zip(outer) {
            prop_assert!(rel(*a, b) <= 1e-8, "{a} vs {b}");
        }
        prop_assert!(state_v_given_y2(&joint).unwrap().abs() <= 1e-10);
        let (u, x1) = u_given_y1_logdets(&joint).unwrap();
        prop_assert!((u - x1).abs() <= 1e-9 * (1.0 + x1.abs()));
        prop_assert!(coefficients_from_joint(&joint).unwrap().max_abs_diff(&coeffs) <= 1e-10);
    }

    #[test]
    fn converse_bounds_are_tight(seed in any::<u64>(), t in 1usize..=4, mu in 1.0f64..5.0) {
        let (spec, strat) = instance(seed, t, false);
        let p = eval_region(&spec, &strat).unwrap();
        for user in User::BOTH {
            prop_assert!(rel(leakage_lower_bound(&spec, &strat, user).unwrap(), p.leakage(user)) <= 1e-9);
        }
        prop_assert!((weighted_sum_upper(&spec, &strat, mu).unwrap() - (p.r1 + mu * p.r2)).abs() <= 1e-12);
    }

    #[test]
    fn region_is_scale_invariant(seed in any::<u64>(), t in 1usize..=3, c in 0.01f64..100.0) {
        let (spec, strat) = instance(seed, t, false);
        let a = eval_region(&spec, &strat).unwrap().as_array();
        let b = eval_region(&spec.scaled(c).unwrap(), &strat.scaled(c)).unwrap().as_array();
        for (x, y) in a.iter().zip(b) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn rates_move_oppositely_along_psd_ray(seed in any::<u64>(), t in 1usize..=3, s in 0.0f64..1.0) {
        let (spec, strat) = instance(seed, t, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        // Direction inside the remaining power, so every step stays feasible.
        let d = random_spd(&mut rng, t, 0.0, 1.0).congruence(strat.k_x2(&spec).sqrt_psd().as_matrix());
        let lo = eval_region(&spec, &strat).unwrap();
        let moved = Strategy { k_x1: strat.k_x1.add(&d.scale(s)), ..strat.clone() };
        prop_assert!(validate(&spec, &moved).unwrap().passed);
        let hi = eval_region(&spec, &moved).unwrap();
        prop_assert!(hi.r1 >= lo.r1 - 1e-12);
        prop_assert!(hi.r2 <= lo.r2 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn enhancement_invariants(seed in any::<u64>(), t in 1usize..=3, mu in 1.05f64..12.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, t, true);
        let sol = solve_gaussian_subproblem(&spec, mu).unwrap();
        prop_assert!(sol.grad_norm <= STATIONARITY_TOL);
        let enh = enhanced_channel(&spec, mu).unwrap();
        prop_assert!(enh.checks(&spec).iter().all(|c| c.passed));
        prop_assert!(verify_preservation(&spec, &enh).unwrap().passed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimizer_output_is_feasible_and_reproducible(
        seed in any::<u64>(),
        mu in 1.0f64..4.0,
        e1 in 0.02f64..0.5,
        e2 in 0.02f64..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 1, false);
        let q = FrontierQuery::new(spec.clone(), mu).with_budgets(e1, e2).with_seed(seed);
        match maximize_weighted(&q) {
            Ok(p) => {
                prop_assert!(validate(&spec, &p.strategy).unwrap().passed);
                prop_assert!(p.point.e1 <= e1 + BUDGET_TOL && p.point.e2 <= e2 + BUDGET_TOL);
                prop_assert_eq!(maximize_weighted(&q).unwrap(), p);
            }
            Err(maskbc::Error::Infeasible { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>(), t in 1usize..=2) {
        let (spec, strat) = instance(seed, t, false);
        let joint = build_joint(&spec, &strat, &derive_coefficients(&spec, &strat).unwrap()).unwrap();
        let a = sample_joint(&joint, 500, seed).unwrap();
        let b = sample_joint(&joint, 500, seed).unwrap();
        prop_assert_eq!(a.data, b.data);
    }
}
