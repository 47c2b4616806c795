//! The ten release criteria. Each prints one PASS/FAIL line; the test fails
//! if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use naturerisk::beef::{
    actor_e_score, compliance_probability, e_score_forest, e_score_nrp, expected_return, score_supplier, ScoreKind,
};
use naturerisk::controversy::{bayes_update_compliance, Report, SentimentLikelihood};
use naturerisk::inference::{enumerate_joint, marginalize, mh_sample, InferenceError, MhConfig};
use naturerisk::io::{parse_document, Document};
use naturerisk::optimizer::{
    assignment_key, branch_and_bound, exhaustive_search, optimize, optimum_distribution, OptimizerConfig,
};
use naturerisk::scenario::{
    apply_divestment, embargo_projection, portfolio_e_score, DivestEdge, ScenarioKind, ScenarioSpec,
};
use naturerisk::water::{
    expected_outputs_mcmc, simulate, water_e_score, Catchment, McmcSettings, ParameterPriors, Prior, SimOptions,
};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn load(rel: &str) -> Document {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    parse_document(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn unit(x: f64) -> bool {
    (0.0..=1.0 + 1e-12).contains(&x)
}

fn inference_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(0xacce);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let (model, evidence) = common::random_model(&mut rng);
        let vars = model.variables().to_vec();
        let free: Vec<&str> = vars
            .iter()
            .filter(|v| !evidence.contains_key(*v))
            .map(String::as_str)
            .collect();
        let query: Vec<&str> = if free.is_empty() {
            vec![vars[0].as_str()]
        } else {
            free.into_iter().take(2).collect()
        };
        match (
            marginalize(&model, &query, &evidence),
            enumerate_joint(&model, &query, &evidence),
        ) {
            (Ok(a), Ok(b)) => {
                let d = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(d);
            }
            (Err(InferenceError::ImpossibleEvidence { .. }), Err(InferenceError::ImpossibleEvidence { .. })) => {}
            (a, b) => return Err(format!("model {i}: {a:?} vs {b:?}")),
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max |diff| {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("max |diff| {worst:.1e} in {:.2}s", elapsed.as_secs_f64()))
}

fn beef_hand_oracle() -> Outcome {
    let Document::SupplyChain(d) = load("beef/one_farm.json") else {
        unreachable!()
    };
    let (g, st) = (&d.graph, &d.farm_states);
    let farm = &g.farms[0];
    let p = farm.car_assessment.p_car_true;
    let mut hand = 0.0;
    for (pc, row) in [(p, &farm.state_given_car_true), (1.0 - p, &farm.state_given_car_false)] {
        for (s, ps) in row.iter().enumerate() {
            hand += pc * ps * st.p_compliance_given_state[s];
        }
    }
    let s = score_supplier(g, st, &g.suppliers[0]).unwrap();
    let compliance = compliance_probability(g, st, &g.suppliers[0]).unwrap();
    ensure((hand - 0.85).abs() <= 1e-12, || format!("hand enumeration {hand}"))?;
    ensure((compliance - 0.85).abs() <= 1e-12, || {
        format!("compliance {compliance}")
    })?;
    ensure((s.e_score_forest - 0.85).abs() <= 1e-12, || {
        format!("forest {}", s.e_score_forest)
    })?;
    Ok(format!("compliance {compliance} forest {}", s.e_score_forest))
}

fn e_score_bounds() -> Outcome {
    let mut rng = common::rng(3);
    let mut checked = 0usize;
    for i in 0..1000 {
        let st = common::random_states(&mut rng);
        let g = common::random_graph(&mut rng, &st);
        for b in &g.suppliers {
            let (f, n) = (e_score_forest(&g, &st, b).unwrap(), e_score_nrp(&g, &st, b).unwrap());
            ensure(unit(f) && unit(n), || format!("graph {i} {b}: {f} {n}"))?;
            checked += 2;
            for actor in g.abattoirs.iter().chain(g.farms.iter().map(|f| &f.id)) {
                for kind in [ScoreKind::Forest, ScoreKind::Nrp] {
                    if let Ok(x) = actor_e_score(&g, &st, b, actor, kind) {
                        ensure(unit(x), || format!("graph {i} {b}/{actor}: {x}"))?;
                        checked += 1;
                    }
                }
            }
        }
        let weights = common::simplex(&mut rng, g.suppliers.len(), false);
        let sp = ScenarioSpec {
            kind: ScenarioKind::Portfolio,
            portfolio_weights: g.suppliers.iter().cloned().zip(weights).collect(),
            divest_edges: Vec::new(),
            survival_table: BTreeMap::new(),
            legislation_strength: None,
            horizon: 1,
            renormalize: true,
        };
        let p = portfolio_e_score(&g, &st, &sp).unwrap();
        ensure(unit(p.forest) && unit(p.nrp), || {
            format!("graph {i} portfolio {} {}", p.forest, p.nrp)
        })?;
        checked += 2;
    }
    Ok(format!("{checked} scores in [0,1]"))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

fn return_linearity() -> Outcome {
    let mut rng = common::rng(4);
    for i in 0..100 {
        let st = common::random_states(&mut rng);
        let mut g = common::random_graph(&mut rng, &st);
        let k0 = g.return_per_head;
        g.return_per_head = 1.0;
        let unit_ret: Vec<f64> = g
            .suppliers
            .iter()
            .map(|b| expected_return(&g, &st, b).unwrap())
            .collect();
        let best = argmax(&unit_ret);
        for k in [0.5, 1.0, 7.0, k0] {
            g.return_per_head = k;
            let r: Vec<f64> = g
                .suppliers
                .iter()
                .map(|b| expected_return(&g, &st, b).unwrap())
                .collect();
            for (x, u) in r.iter().zip(&unit_ret) {
                ensure((x - k * u).abs() <= 1e-12 * x.abs().max(1.0), || {
                    format!("graph {i} K={k}: {x} vs {}", k * u)
                })?;
            }
            ensure(argmax(&r) == best, || format!("graph {i}: ranking changed at K={k}"))?;
        }
    }
    Ok("100 graphs".into())
}

fn scenario_correctness() -> Outcome {
    let mut rng = common::rng(5);
    let mut divested = 0;
    let mut static_runs = 0;
    for i in 0..200 {
        let st = common::random_states(&mut rng);
        let g = common::random_graph(&mut rng, &st);
        let b = g.suppliers[0].clone();
        let row = &g.sourcing_b_to_a[&b];
        if row.len() >= 2 {
            let cut = row.keys().next().unwrap().clone();
            let sp = ScenarioSpec {
                kind: ScenarioKind::Divestment,
                portfolio_weights: BTreeMap::new(),
                divest_edges: vec![DivestEdge {
                    supplier: b.clone(),
                    abattoir: cut.clone(),
                }],
                survival_table: BTreeMap::new(),
                legislation_strength: None,
                horizon: 1,
                renormalize: true,
            };
            let edited = apply_divestment(&g, &sp).unwrap();
            let mut authored = g.clone();
            let r = authored.sourcing_b_to_a.get_mut(&b).unwrap();
            r.remove(&cut);
            let total: f64 = r.values().sum();
            r.values_mut().for_each(|p| *p /= total);
            let (x, y) = (
                score_supplier(&edited, &st, &b).unwrap(),
                score_supplier(&authored, &st, &b).unwrap(),
            );
            ensure(
                (x.e_score_forest - y.e_score_forest).abs() <= 1e-12 && (x.e_score_nrp - y.e_score_nrp).abs() <= 1e-12,
                || format!("graph {i}: divestment differs from authored graph"),
            )?;
            divested += 1;
        }
        let ones = st.state_labels.iter().map(|l| (l.clone(), 1.0)).collect();
        let sp = ScenarioSpec {
            kind: ScenarioKind::EmbargoDynamics,
            portfolio_weights: BTreeMap::new(),
            divest_edges: Vec::new(),
            survival_table: BTreeMap::from([("strong".to_string(), ones)]),
            legislation_strength: Some("strong".into()),
            horizon: 4,
            renormalize: true,
        };
        let steps = embargo_projection(&g, &st, &sp, &b).unwrap();
        for s in &steps {
            ensure(
                s.e_score_forest.to_bits() == steps[0].e_score_forest.to_bits()
                    && s.expected_return.to_bits() == steps[0].expected_return.to_bits(),
                || format!("graph {i}: full survival projection moved"),
            )?;
        }
        static_runs += 1;
    }

    // Two states, violators survive each step with probability 0.5.
    let Document::SupplyChain(d) = load("beef/one_farm.json") else {
        unreachable!()
    };
    let (g, st) = (&d.graph, &d.farm_states);
    let labels = &st.state_labels;
    let sp = ScenarioSpec {
        kind: ScenarioKind::EmbargoDynamics,
        portfolio_weights: BTreeMap::new(),
        divest_edges: Vec::new(),
        survival_table: BTreeMap::from([(
            "strong".to_string(),
            BTreeMap::from([(labels[0].clone(), 1.0), (labels[1].clone(), 0.5)]),
        )]),
        legislation_strength: Some("strong".into()),
        horizon: 3,
        renormalize: true,
    };
    let steps = embargo_projection(g, st, &sp, &g.suppliers[0]).unwrap();
    let (good, mut bad) = (0.85, 0.15);
    for s in &steps {
        let hand = good / (good + bad);
        ensure((s.e_score_forest - hand).abs() <= 1e-9, || {
            format!("step {}: {} vs {hand}", s.step, s.e_score_forest)
        })?;
        bad *= 0.5;
    }
    Ok(format!(
        "{divested} divestments, {static_runs} static projections, 3-step lattice"
    ))
}

fn report(i: usize, class: &str) -> Report {
    Report {
        id: format!("r{i}"),
        subject: "B1".into(),
        text: None,
        sentiment_class: Some(class.into()),
    }
}

fn controversy_bayes() -> Outcome {
    let Document::Reports(d) = load("beef/reports_one_farm.json") else {
        unreachable!()
    };
    let lk = &d.corpus.likelihood;
    let lexicon = naturerisk::controversy::Lexicon {
        classes: lk.classes.clone(),
        words: BTreeMap::new(),
    };
    let p = bayes_update_compliance(0.85, &d.corpus.reports, &lexicon, lk).unwrap();
    ensure((p - 0.4857).abs() <= 5e-4, || format!("posterior {p}"))?;

    let flat = SentimentLikelihood {
        classes: lk.classes.clone(),
        given_compliant: vec![0.3, 0.3, 0.4],
        given_noncompliant: vec![0.3, 0.3, 0.4],
    };
    let mixed: Vec<Report> = (0..9).map(|i| report(i, &lk.classes[i % 3])).collect();
    for prior in [0.0, 0.2, 0.85, 1.0] {
        let q = bayes_update_compliance(prior, &mixed, &lexicon, &flat).unwrap();
        ensure((q - prior).abs() <= 1e-12, || {
            format!("flat likelihood moved {prior} to {q}")
        })?;
    }

    let mut reports = mixed.clone();
    let base = bayes_update_compliance(0.6, &reports, &lexicon, lk).unwrap();
    let mut rng = common::rng(6);
    for _ in 0..10 {
        reports.shuffle(&mut rng);
        let q = bayes_update_compliance(0.6, &reports, &lexicon, lk).unwrap();
        ensure(q == base, || format!("ordering changed posterior: {q} vs {base}"))?;
    }
    Ok(format!("posterior {p:.6}"))
}

fn water_pipeline() -> Outcome {
    let mut rng = common::rng(7);
    for i in 0..100 {
        let mut c = common::random_catchment(&mut rng, 3, 3, 8);
        let plan: Vec<usize> = (0..3).map(|f| *c.candidates(f).last().unwrap()).collect();
        let tr = simulate(&c, &plan, 8, SimOptions::default()).unwrap();
        let flow: f64 = tr
            .steps
            .iter()
            .map(|s| s.income - s.nbs_cost - s.chemical_cost - s.repayment - s.fine - s.other_expenses)
            .sum();
        let lhs = tr.final_balance() - tr.initial_balance;
        ensure((lhs - flow).abs() <= 1e-6 * lhs.abs().max(flow.abs()).max(1.0), || {
            format!("catchment {i}: {lhs} vs {flow}")
        })?;

        c.rainfall.values.iter_mut().for_each(|r| *r = 0.0);
        let tr = simulate(&c, &plan, 8, SimOptions::default()).unwrap();
        let mut b = c.finance.initial_balance;
        for s in &tr.steps {
            b = b + s.income - s.nbs_cost - s.repayment - s.other_expenses;
            ensure(
                s.pollution == 0.0 && s.fine == 0.0 && s.reputation == 1.0 && s.balance == b,
                || format!("catchment {i} zero rain step {}: {s:?}", s.t),
            )?;
        }
    }
    for _ in 0..1000 {
        let p = rng.random_range(1e-9..100.0);
        let chem = rng.random_range(0.0..1e4);
        let nbs = rng.random_range(1e-9..1e4);
        ensure(water_e_score(p, chem, 0.0, false).unwrap() == 0.0, || {
            format!("nbs=0, pollution {p}")
        })?;
        ensure(water_e_score(0.0, 0.0, nbs, false).unwrap() == 1.0, || {
            format!("nbs-only spend {nbs}")
        })?;
    }
    Ok("100 catchments".into())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn optimizer_oracle() -> Outcome {
    let mut rng = common::rng(8);
    let cfg = OptimizerConfig::default();
    let mut feasible = 0;
    for i in 0..100 {
        let n = rng.random_range(1..=4);
        let c = common::random_catchment(&mut rng, n, 3, 6);
        match (branch_and_bound(&c, 6, &cfg), exhaustive_search(&c, 6, &cfg)) {
            (Ok(b), Ok(e)) => {
                ensure(b.assignment.choices == e.assignment.choices, || {
                    format!("instance {i}: assignments differ")
                })?;
                ensure(close(b.assignment.objective, e.assignment.objective), || {
                    format!("instance {i}: objectives differ")
                })?;
                let tr = simulate(&c, &b.plan, 6, SimOptions::default()).unwrap();
                ensure(tr.steps.iter().all(|s| s.balance >= 0.0), || {
                    format!("instance {i}: returned plan insolvent")
                })?;
                feasible += 1;
            }
            (Err(_), Err(_)) => {}
            (b, e) => {
                return Err(format!(
                    "instance {i}: {:?} vs {:?}",
                    b.map(|s| s.assignment),
                    e.map(|s| s.assignment)
                ))
            }
        }
    }
    Ok(format!("{feasible} feasible of 100"))
}

fn point_mass(c: &Catchment) -> ParameterPriors {
    ParameterPriors {
        chemical_cost_rate: Some(Prior::PointMass {
            value: c.finance.chemical_cost_rate,
        }),
        fine_rate: Some(Prior::PointMass {
            value: c.finance.fine_rate,
        }),
        rain_exponent: Some(Prior::PointMass { value: c.rain_exponent }),
        load_factors: c
            .fields
            .iter()
            .map(|f| (f.id.clone(), Prior::PointMass { value: f.load_factor }))
            .collect(),
    }
}

fn mcmc_sanity() -> Outcome {
    let cfg = MhConfig {
        proposal_scale: 2.4,
        n_draws: 50_000,
        burn_in: 1_000,
        seed: 42,
    };
    let a = mh_sample(|x| -0.5 * x[0] * x[0], &[0.0], &cfg).unwrap();
    let b = mh_sample(|x| -0.5 * x[0] * x[0], &[0.0], &cfg).unwrap();
    let (m, v) = (a.mean(0), a.variance(0));
    ensure(m.abs() <= 0.02, || format!("mean {m}"))?;
    ensure((v - 1.0).abs() <= 0.05, || format!("variance {v}"))?;
    ensure(a == b, || "seeded runs differ".into())?;

    let Document::Catchment(d) = load("water/catchment.json") else {
        unreachable!()
    };
    let c = &d.catchment;
    let horizon = c.max_horizon();
    let plan = c.resolve_plan(&d.plan).unwrap();
    let priors = point_mass(c);
    let settings = McmcSettings {
        n_draws: 100,
        ..Default::default()
    };
    let s = expected_outputs_mcmc(c, &plan, horizon, &priors, &settings, SimOptions::default()).unwrap();
    let det = simulate(c, &plan, horizon, SimOptions::default()).unwrap();
    for (x, y) in s.steps.iter().zip(&det.steps) {
        ensure(
            x.balance.mean == y.balance
                && x.reputation.mean == y.reputation
                && x.e_score.mean == y.e_score
                && x.pollution.mean == y.pollution
                && x.fine.mean == y.fine,
            || format!("expected outputs differ at step {}", y.t),
        )?;
    }
    let ocfg = OptimizerConfig::default();
    let dist = optimum_distribution(c, horizon, &priors, &settings, &ocfg).unwrap();
    let opt = optimize(c, horizon, &ocfg).unwrap();
    let key = assignment_key(&opt.assignment.choices);
    ensure(
        dist.histogram == BTreeMap::from([(key.clone(), settings.n_draws)]),
        || format!("histogram {:?}", dist.histogram),
    )?;
    let mean = dist.objective.as_ref().map(|s| s.mean);
    ensure(mean == Some(opt.assignment.objective), || {
        format!("objective {mean:?} vs {}", opt.assignment.objective)
    })?;
    Ok(format!("mean {m:.4} variance {v:.4}, point mass -> {key}"))
}

fn cli_determinism() -> Outcome {
    for case in common::cli::CASES {
        common::cli::check_rerun(case)?;
        common::cli::check_golden(case, false)?;
    }
    Ok(format!("{} golden cases", common::cli::CASES.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("inference oracle", inference_oracle),
        ("beef chain hand oracle", beef_hand_oracle),
        ("e-score bounds", e_score_bounds),
        ("return linearity and ranking", return_linearity),
        ("scenario correctness", scenario_correctness),
        ("controversy bayes", controversy_bayes),
        ("water pipeline", water_pipeline),
        ("optimizer oracle", optimizer_oracle),
        ("mcmc sanity", mcmc_sanity),
        ("cli determinism", cli_determinism),
    ];
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out);
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed.push(*name);
                ("FAIL", e)
            }
        };
        let _ = writeln!(
            out,
            "{tag} [{}] {name}: {detail} ({:.2}s)",
            n + 1,
            t.elapsed().as_secs_f64()
        );
    }
    let total = start.elapsed();
    let _ = writeln!(out, "total {:.2}s", total.as_secs_f64());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert!(total < Duration::from_secs(300), "suite took {total:?}");
}
