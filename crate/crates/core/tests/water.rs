mod common;

use naturerisk::water::{
    balance_trajectory, catchment_pollution, chemical_cost, expected_outputs_mcmc, field_pollution, reputation,
    simulate, water_e_score, McmcSettings, ParameterPriors, ParametricRunoff, Prior, SimOptions,
};
use proptest::prelude::*;

fn none_plan(c: &naturerisk::water::Catchment) -> Vec<usize> {
    c.all_none().unwrap()
}

#[test]
fn zero_rain_is_a_fixed_point() {
    let mut rng = common::rng(1);
    for _ in 0..50 {
        let mut c = common::random_catchment(&mut rng, 3, 3, 6);
        c.rainfall.values.iter_mut().for_each(|r| *r = 0.0);
        let plan: Vec<usize> = (0..c.fields.len()).map(|f| *c.candidates(f).last().unwrap()).collect();
        let tr = simulate(&c, &plan, 6, SimOptions::default()).unwrap();
        let mut b = c.finance.initial_balance;
        for s in &tr.steps {
            assert_eq!(s.pollution, 0.0);
            assert_eq!(s.chemical_cost, 0.0);
            assert_eq!(s.fine, 0.0);
            assert_eq!(s.reputation, 1.0);
            b = b + s.income - s.nbs_cost - 0.0 - s.repayment - 0.0 - s.other_expenses;
            assert_eq!(s.balance, b);
        }
    }
}

#[test]
fn hand_unrolled_three_steps_with_fines() {
    let mut rng = common::rng(2);
    let mut c = common::random_catchment(&mut rng, 1, 1, 3);
    c.fields[0].area = 10.0;
    c.fields[0].load_factor = 1.0;
    c.rain_exponent = 1.0;
    c.rainfall.values = vec![2.0, 4.0, 1.0];
    let f = &mut c.finance;
    f.initial_balance = 100.0;
    f.income_per_interval = vec![50.0; 3];
    f.other_expenses = vec![5.0; 3];
    f.bond_repayment = naturerisk::water::BondRepayment::Fixed { series: vec![10.0; 3] };
    f.chemical_cost_rate = 1.0;
    f.fine_rate = 2.0;
    f.fine_cap_fraction = 0.25;
    f.reputation_scale = Some(100.0);
    // Pi = 20, 40, 10; rho = Pi
    // B1 = 100 + 50 - 20 - 10 - 0 - 5 = 115
    // F2 = min(2 * 20, 0.25 * 115) = 28.75; B2 = 115 + 50 - 40 - 10 - 28.75 - 5 = 81.25
    // F3 = min(2 * 40, 0.25 * 81.25) = 20.3125; B3 = 81.25 + 50 - 10 - 10 - 20.3125 - 5 = 85.9375
    let b = balance_trajectory(&c, &[0], 3).unwrap();
    assert_eq!(b, vec![100.0, 115.0, 81.25, 85.9375]);
    let tr = simulate(&c, &[0], 3, SimOptions::default()).unwrap();
    assert_eq!(tr.steps[2].reputation, (-(28.75 + 20.3125) / 100.0f64).exp());
}

#[test]
fn catchment_sum_and_chemical_cost_are_componentwise() {
    let mut rng = common::rng(3);
    let c = common::random_catchment(&mut rng, 4, 3, 5);
    let plan: Vec<usize> = (0..4).map(|f| *c.candidates(f).last().unwrap()).collect();
    let runoff = ParametricRunoff {
        rain_exponent: c.rain_exponent,
    };
    let tr = simulate(&c, &plan, 5, SimOptions::default()).unwrap();
    for t in 1..=5 {
        let manual: f64 = (0..4)
            .map(|f| {
                field_pollution(
                    &c.fields[f],
                    &c.options[plan[f]],
                    (t - 1) as u32,
                    c.rainfall.values[t - 1],
                    c.rain_exponent,
                )
            })
            .sum();
        let p = catchment_pollution(&c, &plan, t, &runoff);
        assert!((p - manual).abs() <= 1e-12 * manual.max(1.0));
        assert_eq!(tr.steps[t - 1].chemical_cost, chemical_cost(&c.finance, p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn balance_is_conserved(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let c = common::random_catchment(&mut rng, 3, 3, 8);
        let plan: Vec<usize> = (0..3).map(|f| *c.candidates(f).last().unwrap()).collect();
        let tr = simulate(&c, &plan, 8, SimOptions::default()).unwrap();
        let flow: f64 = tr.steps.iter().map(|s| s.income - s.nbs_cost - s.chemical_cost - s.repayment - s.fine - s.other_expenses).sum();
        let lhs = tr.final_balance() - tr.initial_balance;
        let scale = lhs.abs().max(flow.abs()).max(1.0);
        prop_assert!((lhs - flow).abs() <= 1e-6 * scale);
    }

    #[test]
    fn reputation_is_non_increasing_and_exact(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let c = common::random_catchment(&mut rng, 2, 2, 8);
        let tr = simulate(&c, &none_plan(&c), 8, SimOptions::default()).unwrap();
        let scale = c.finance.effective_reputation_scale();
        let mut fines = Vec::new();
        let mut last = 1.0;
        for s in &tr.steps {
            fines.push(s.fine);
            prop_assert_eq!(s.reputation, reputation(&fines, scale));
            prop_assert!(s.reputation <= last && s.reputation > 0.0);
            last = s.reputation;
        }
    }

    #[test]
    fn more_absorption_never_adds_pollution(seed in any::<u64>(), a in 0.0f64..0.99, da in 0.0f64..0.99, age in 0u32..6, rain in 0.0f64..50.0) {
        let mut rng = common::rng(seed);
        let c = common::random_catchment(&mut rng, 1, 2, 1);
        let mut o = c.options[1].clone();
        o.absorption_max = a;
        let p1 = field_pollution(&c.fields[0], &o, age, rain, c.rain_exponent);
        o.absorption_max = (a + da * (0.99 - a)).min(0.99);
        let p2 = field_pollution(&c.fields[0], &o, age, rain, c.rain_exponent);
        prop_assert!(p2 <= p1);
    }

    #[test]
    fn e_score_bounds(p in 0.0f64..1e3, chem in 0.0f64..1e4, nbs in 0.0f64..1e4, strict in any::<bool>()) {
        let e = water_e_score(p, chem, nbs, strict).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        if p > 0.0 {
            prop_assert_eq!(water_e_score(p, chem, 0.0, strict).unwrap(), 0.0);
        }
        if nbs > 0.0 {
            prop_assert_eq!(water_e_score(0.0, 0.0, nbs, false).unwrap(), 1.0);
        }
    }
}

#[test]
fn point_mass_priors_collapse_to_the_pipeline() {
    let mut rng = common::rng(4);
    let c = common::random_catchment(&mut rng, 3, 3, 5);
    let plan = none_plan(&c);
    let priors = ParameterPriors {
        chemical_cost_rate: Some(Prior::PointMass {
            value: c.finance.chemical_cost_rate,
        }),
        fine_rate: Some(Prior::Uniform {
            low: c.finance.fine_rate,
            high: c.finance.fine_rate,
        }),
        ..Default::default()
    };
    let settings = McmcSettings {
        n_draws: 64,
        ..Default::default()
    };
    let s = expected_outputs_mcmc(&c, &plan, 5, &priors, &settings, SimOptions::default()).unwrap();
    let det = simulate(&c, &plan, 5, SimOptions::default()).unwrap();
    for (a, b) in s.steps.iter().zip(&det.steps) {
        assert_eq!(a.balance.mean, b.balance);
        assert_eq!(a.reputation.mean, b.reputation);
        assert_eq!(a.e_score.mean, b.e_score);
        assert_eq!(a.balance.sd, 0.0);
    }
}
