//! Seeded random instances shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

pub mod cli;

use naturerisk::beef::{CarAssessment, Farm, FarmStateModel, LaunderingSource, SupplyChainGraph};
use naturerisk::inference::{DiscreteModel, Evidence, FactorKind, FactorTable};
use naturerisk::water::{BondRepayment, Catchment, Field, FinanceParams, NbsKind, NbsOption, RainfallSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector; with `sparse`, some entries are exactly zero.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                if sparse && rng.random_bool(0.25) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
}

/// Random DAG of conditional tables plus an occasional potential, with joint
/// state space at most 2^16, and random evidence.
pub fn random_model(rng: &mut ChaCha8Rng) -> (DiscreteModel, Evidence) {
    loop {
        let n = rng.random_range(2..=7);
        let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        if cards.iter().product::<usize>() > 1 << 16 {
            continue;
        }
        let names: Vec<String> = (0..n).map(|i| format!("X{i}")).collect();
        let mut factors = Vec::new();
        for i in 0..n {
            let mut parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(0.4)).collect();
            parents.truncate(3);
            let pairs: Vec<(&str, usize)> = parents.iter().map(|&p| (names[p].as_str(), cards[p])).collect();
            let rows_n: usize = parents.iter().map(|&p| cards[p]).product();
            let rows: Vec<Vec<f64>> = (0..rows_n).map(|_| simplex(rng, cards[i], true)).collect();
            factors.push(FactorTable::conditional(&names[i], cards[i], &pairs, &rows).unwrap());
        }
        if n >= 2 && rng.random_bool(0.3) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                let values = (0..cards[a] * cards[b]).map(|_| rng.random::<f64>() + 0.01).collect();
                factors.push(
                    FactorTable::new(
                        vec![names[a].clone(), names[b].clone()],
                        vec![cards[a], cards[b]],
                        values,
                        FactorKind::Potential,
                    )
                    .unwrap(),
                );
            }
        }
        let model = DiscreteModel::new(factors).unwrap();
        let mut evidence = Evidence::new();
        for i in 0..n {
            if rng.random_bool(0.25) {
                evidence.insert(names[i].clone(), rng.random_range(0..cards[i]));
            }
        }
        return (model, evidence);
    }
}

pub fn random_states(rng: &mut ChaCha8Rng) -> FarmStateModel {
    let n_s = rng.random_range(2..=3);
    let n_bins = rng.random_range(2..=5);
    let n_c = rng.random_range(1..=3);
    let mut bins: Vec<f64> = (0..n_bins).map(|_| rng.random::<f64>()).collect();
    bins.sort_by(f64::total_cmp);
    FarmStateModel {
        state_labels: (0..n_s).map(|i| format!("s{i}")).collect(),
        p_compliance_given_state: (0..n_s).map(|_| rng.random::<f64>()).collect(),
        nrp_given_state: (0..n_s).map(|_| simplex(rng, n_bins, true)).collect(),
        cattle_given_state: (0..n_s).map(|_| simplex(rng, n_c, true)).collect(),
        nrp_bins: bins,
        cattle_levels: (0..n_c).map(|_| rng.random_range(0..3000)).collect(),
        legal_reserve: Vec::new(),
    }
}

fn row(ids: &[String], probs: Vec<f64>) -> BTreeMap<String, f64> {
    ids.iter().cloned().zip(probs).filter(|(_, p)| *p > 0.0).collect()
}

/// Random valid graph. Farm `i` may launder only from farms `j < i`.
pub fn random_graph(rng: &mut ChaCha8Rng, states: &FarmStateModel) -> SupplyChainGraph {
    let n_b = rng.random_range(1..=3);
    let n_a = rng.random_range(1..=3);
    let n_f = rng.random_range(1..=4);
    let suppliers: Vec<String> = (0..n_b).map(|i| format!("B{i}")).collect();
    let abattoirs: Vec<String> = (0..n_a).map(|i| format!("A{i}")).collect();
    let farm_ids: Vec<String> = (0..n_f).map(|i| format!("F{i}")).collect();
    let n_s = states.n_states();
    let farms = (0..n_f)
        .map(|i| {
            let mut laundering = Vec::new();
            let mut budget = 1.0;
            for earlier in &farm_ids[..i] {
                if rng.random_bool(0.4) {
                    let p = rng.random::<f64>() * budget * 0.9;
                    budget -= p;
                    laundering.push(LaunderingSource {
                        source: earlier.clone(),
                        probability: p,
                    });
                }
            }
            Farm {
                id: farm_ids[i].clone(),
                car_assessment: CarAssessment {
                    p_car_true: rng.random::<f64>(),
                },
                state_given_car_true: simplex(rng, n_s, true),
                state_given_car_false: simplex(rng, n_s, true),
                laundering_sources: laundering,
            }
        })
        .collect();
    let sourcing_b_to_a = suppliers
        .iter()
        .map(|b| (b.clone(), row(&abattoirs, simplex(rng, n_a, true))))
        .collect();
    let sourcing_a_to_f = abattoirs
        .iter()
        .map(|a| (a.clone(), row(&farm_ids, simplex(rng, n_f, true))))
        .collect();
    SupplyChainGraph {
        suppliers,
        abattoirs,
        farms,
        sourcing_b_to_a,
        sourcing_a_to_f,
        return_per_head: rng.random_range(0.5..5.0),
    }
}

/// Random catchment with every field offering `none` plus up to
/// `max_options - 1` mitigating options.
pub fn random_catchment(rng: &mut ChaCha8Rng, n_fields: usize, max_options: usize, horizon: usize) -> Catchment {
    let kinds = [NbsKind::CultivatedBuffer, NbsKind::GrasslandBuffer];
    let mut options = vec![NbsOption {
        id: "none".into(),
        kind: NbsKind::None,
        absorption_max: 0.0,
        establishment_lag: 0,
        payment_per_ha_per_interval: 0.0,
    }];
    for k in 0..4 {
        options.push(NbsOption {
            id: format!("o{k}"),
            kind: kinds[k % 2],
            absorption_max: rng.random_range(0.05..0.95),
            establishment_lag: rng.random_range(0..4),
            payment_per_ha_per_interval: rng.random_range(0.0..3.0),
        });
    }
    let fields = (0..n_fields)
        .map(|f| {
            let mut cands = vec!["none".to_string()];
            let extra = rng.random_range(0..max_options);
            for k in rand::seq::index::sample(rng, 4, extra.min(4)).into_vec() {
                cands.push(format!("o{k}"));
            }
            Field {
                id: format!("f{f}"),
                area: rng.random_range(1.0..20.0),
                load_factor: rng.random_range(0.0..0.2),
                candidate_options: cands,
            }
        })
        .collect();
    let series =
        |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (0..horizon).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
    let bond_repayment = if rng.random_bool(0.5) {
        BondRepayment::Fixed {
            series: series(rng, 0.0, 20.0),
        }
    } else {
        BondRepayment::PollutionLinked {
            base: rng.random_range(0.0..20.0),
            step_up: rng.random_range(0.0..10.0),
            threshold: rng.random_range(0.0..40.0),
        }
    };
    Catchment {
        fields,
        options,
        rainfall: RainfallSeries {
            values: series(rng, 0.0, 10.0),
            interval_label: "quarter".into(),
        },
        finance: FinanceParams {
            initial_balance: rng.random_range(0.0..300.0),
            income_per_interval: series(rng, 20.0, 80.0),
            bond_repayment,
            other_expenses: series(rng, 0.0, 30.0),
            chemical_cost_rate: rng.random_range(0.0..2.0),
            fine_rate: rng.random_range(0.0..3.0),
            fine_cap_fraction: rng.random_range(0.0..1.0),
            reputation_scale: None,
        },
        rain_exponent: rng.random_range(0.5..1.5),
    }
}
