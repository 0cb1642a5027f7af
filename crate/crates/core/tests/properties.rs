use proptest::prelude::*;

use smartleak_core::policies::{battery_update, build_chain, feasible_range, policy_step, Policy, SimState};
use smartleak_core::slb::{fit_trunc_exp, slb_avg_peak, slb_peak_only};
use smartleak_core::{entropy, ppf, ppf_curve, Capacity, GridModel, Pmf};

fn pmf(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.05f64..1.0, len).prop_map(|w| Pmf::from_weights(&w).unwrap())
}

fn policy(cap: u64) -> impl Strategy<Value = Policy> {
    prop_oneof![
        (0.0f64..=1.0).prop_map(|p_v| Policy::BatteryIndependent { p_v }),
        prop::collection::vec(0.0f64..=1.0, cap as usize + 1)
            .prop_map(|p_v| Policy::BatteryConditioned { p_v }),
        prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 3).prop_map(|pairs| {
            let mut p = [0.0; 6];
            for (i, (a, b)) in pairs.into_iter().enumerate() {
                p[i] = a;
                p[i + 3] = b * (1.0 - a);
            }
            Policy::ThreeLevel { p }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feasible_range_contains_demand(x in 0usize..20, e in 0usize..10, b in 0u64..30, p_hat in 1u64..10) {
        let (lo, hi) = feasible_range(x, e, b, p_hat);
        prop_assert!(lo <= hi);
        prop_assert_eq!(hi, x);
        prop_assert!(x - lo <= p_hat as usize);
        prop_assert!((x - lo) as u64 <= b + e as u64);
        for y in lo..=hi {
            let next = battery_update(b, e, x, y, Capacity::Finite(12)).unwrap();
            prop_assert!(next <= 12);
        }
    }

    #[test]
    fn steps_stay_feasible(
        (cap, policy) in (0u64..5).prop_flat_map(|c| (Just(c), policy(c))),
        px in pmf(2..=5),
        e_weights in prop::collection::vec(0.05f64..1.0, 1..=3),
        seed in any::<u64>(),
    ) {
        let pe = Pmf::from_weights(&e_weights).unwrap();
        let p_hat = (pe.max_point() as u64).max(1);
        let model = GridModel::new(px, pe, Capacity::Finite(cap), p_hat).unwrap();
        let mut state = SimState::default();
        let mut s = seed;
        for _ in 0..200 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = |k: u32| ((s.rotate_left(k) >> 11) as f64) / (1u64 << 53) as f64;
            let (x, e) = (model.p_x.sample(u(0)), model.p_e.sample(u(21)));
            let (y, next) = policy_step(&policy, &model, x, e, state, u(42)).unwrap();
            let (lo, hi) = feasible_range(x, e, state.b, p_hat);
            prop_assert!(lo <= y && y <= hi);
            prop_assert!(next.b <= cap);
            prop_assert_eq!(next.t, state.t + 1);
            state = next;
        }
    }

    #[test]
    fn chains_are_stochastic(
        (cap, policy) in (0u64..5).prop_flat_map(|c| (Just(c), policy(c))),
        px in pmf(2..=4),
        pe in pmf(1..=3),
    ) {
        let p_hat = (pe.max_point() as u64).max(1);
        let model = GridModel::new(px, pe, Capacity::Finite(cap), p_hat).unwrap();
        let chain = build_chain(&model, &policy).unwrap();
        for row in chain.transition() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slb_respects_uniform_ceiling(p_hat in 0.1f64..10.0, frac in 0.01f64..0.99, h in -2.0f64..4.0) {
        let p_bar = frac * p_hat;
        let fit = fit_trunc_exp(p_bar, p_hat).unwrap();
        prop_assert!(fit.entropy_bits() <= p_hat.log2() + 1e-9);
        prop_assert!(slb_avg_peak(h, p_bar, p_hat).unwrap() >= slb_peak_only(h, p_hat).unwrap() - 1e-9);
        if !fit.uniform {
            prop_assert!((fit.mean() - p_bar).abs() < 1e-9 * p_hat.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ppf_within_entropy_and_budget(px in pmf(2..=6), frac in 0.0f64..1.0, p_hat in 1u64..4) {
        let p_bar = frac * px.mean();
        let r = ppf(&px, p_bar, p_hat, 1e-9).unwrap();
        prop_assert!(r.leakage_bits >= 0.0);
        prop_assert!(r.leakage_bits <= entropy(&px) + 1e-9);
        prop_assert!(r.achieved_avg_draw <= p_bar + 1e-9);
    }

    #[test]
    fn ppf_curve_nonincreasing_and_convex(px in pmf(2..=5), p_hat in 1u64..3) {
        let top = px.mean();
        let grid: Vec<f64> = (0..=8).map(|i| top * i as f64 / 8.0).collect();
        let curve = ppf_curve(&px, p_hat, &grid).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-6);
        }
        for w in curve.windows(3) {
            prop_assert!(w[1].1 <= 0.5 * (w[0].1 + w[2].1) + 1e-6);
        }
    }
}
