//! Static NbS assignment maximizing the summed end-of-step balance subject to
//! solvency at every step.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::seed::stream;
use crate::water::{
    self, field_pollution, simulate, BondRepayment, Catchment, McmcSettings, ParameterPriors, ParameterSampler, Plan,
    SimOptions, Stat, Trajectory, WaterError,
};

pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimizerConfig {
    /// Instances with at most this many assignments are searched exhaustively.
    pub exhaustive_cap: u64,
    pub sim: SimOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    Exhaustive,
    BranchAndBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    /// Field id to option id.
    pub choices: BTreeMap<String, String>,
    /// Sum of end-of-step balances.
    pub objective: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub assignment: Assignment,
    #[serde(skip)]
    pub plan: Plan,
    pub method: SearchMethod,
    /// Leaves evaluated with the full pipeline.
    pub evaluated: u64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    /// The assignment whose lowest balance is highest.
    pub best_violation: Assignment,
    pub first_insolvent_step: usize,
    pub min_balance: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(
        "no assignment keeps the balance non-negative; best violation {choices:?} is first insolvent at step {step}",
        choices = .0.best_violation.choices,
        step = .0.first_insolvent_step
    )]
    Infeasible(Box<InfeasibilityReport>),
    #[error(transparent)]
    Water(#[from] WaterError),
}

/// Per-field option rank used to break objective ties: higher absorption
/// first, then option id.
struct Ranking {
    /// `rank[f][o]` for candidate option index `o`.
    rank: Vec<BTreeMap<usize, usize>>,
    /// Field indices in lexicographic id order.
    field_order: Vec<usize>,
}

impl Ranking {
    fn new(c: &Catchment) -> Self {
        let rank = (0..c.fields.len())
            .map(|f| {
                let mut cands = c.candidates(f);
                cands.sort_by(|&a, &b| {
                    let (oa, ob) = (&c.options[a], &c.options[b]);
                    ob.absorption_max
                        .total_cmp(&oa.absorption_max)
                        .then_with(|| oa.id.cmp(&ob.id))
                });
                cands.into_iter().enumerate().map(|(r, o)| (o, r)).collect()
            })
            .collect();
        let mut field_order: Vec<usize> = (0..c.fields.len()).collect();
        field_order.sort_by(|&a, &b| c.fields[a].id.cmp(&c.fields[b].id));
        Ranking { rank, field_order }
    }

    fn key(&self, plan: &[usize]) -> Vec<usize> {
        self.field_order.iter().map(|&f| self.rank[f][&plan[f]]).collect()
    }

    /// Candidates of `f` in preference order.
    fn ordered(&self, f: usize) -> Vec<usize> {
        let mut v: Vec<(usize, usize)> = self.rank[f].iter().map(|(&o, &r)| (r, o)).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, o)| o).collect()
    }
}

/// A scored leaf; `Greater` is better.
#[derive(Debug, Clone)]
struct Scored {
    value: f64,
    key: Vec<usize>,
    plan: Plan,
    trajectory: Trajectory,
}

impl Scored {
    fn cmp_better(&self, other: &Scored) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.key.cmp(&self.key))
    }
}

fn pick(a: Option<Scored>, b: Option<Scored>) -> Option<Scored> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.cmp_better(&a) == Ordering::Greater { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Best feasible leaf by objective and best leaf by minimum balance.
#[derive(Debug, Clone, Default)]
struct Incumbents {
    feasible: Option<Scored>,
    least_violation: Option<Scored>,
}

impl Incumbents {
    fn merge(self, other: Incumbents) -> Incumbents {
        Incumbents {
            feasible: pick(self.feasible, other.feasible),
            least_violation: pick(self.least_violation, other.least_violation),
        }
    }

    fn offer(&mut self, plan: &[usize], trajectory: Trajectory, ranking: &Ranking) {
        let key = ranking.key(plan);
        let min_balance = trajectory.min_balance();
        if trajectory.first_insolvent_step().is_none() {
            let s = Scored {
                value: trajectory.objective(),
                key,
                plan: plan.to_vec(),
                trajectory,
            };
            self.feasible = pick(self.feasible.take(), Some(s));
        } else {
            let s = Scored {
                value: min_balance,
                key,
                plan: plan.to_vec(),
                trajectory,
            };
            self.least_violation = pick(self.least_violation.take(), Some(s));
        }
    }
}

fn assignment_count(c: &Catchment) -> u64 {
    (0..c.fields.len()).fold(1u64, |acc, f| acc.saturating_mul(c.candidates(f).len() as u64))
}

fn precheck(c: &Catchment, horizon: usize, cfg: &OptimizerConfig) -> Result<Plan, WaterError> {
    let none = c.all_none()?;
    simulate(c, &none, horizon, cfg.sim)?;
    Ok(none)
}

fn finish(c: &Catchment, inc: Incumbents, method: SearchMethod, evaluated: u64) -> Result<Solution, OptimizeError> {
    if let Some(best) = inc.feasible {
        return Ok(Solution {
            assignment: Assignment {
                choices: c.plan_ids(&best.plan),
                objective: best.value,
                feasible: true,
            },
            plan: best.plan,
            method,
            evaluated,
            trajectory: best.trajectory,
        });
    }
    let worst = inc
        .least_violation
        .ok_or_else(|| WaterError::Config("catchment admits no assignment".into()))?;
    Err(OptimizeError::Infeasible(Box::new(InfeasibilityReport {
        best_violation: Assignment {
            choices: c.plan_ids(&worst.plan),
            objective: worst.trajectory.objective(),
            feasible: false,
        },
        first_insolvent_step: worst.trajectory.first_insolvent_step().unwrap_or(0),
        min_balance: worst.value,
        trajectory: worst.trajectory,
    })))
}

fn decode(index: u64, cands: &[Vec<usize>]) -> Plan {
    let mut rest = index;
    let mut plan = vec![0; cands.len()];
    for f in (0..cands.len()).rev() {
        let n = cands[f].len() as u64;
        plan[f] = cands[f][(rest % n) as usize];
        rest /= n;
    }
    plan
}

/// Evaluates every assignment.
pub fn exhaustive_search(c: &Catchment, horizon: usize, cfg: &OptimizerConfig) -> Result<Solution, OptimizeError> {
    precheck(c, horizon, cfg)?;
    let ranking = Ranking::new(c);
    let cands: Vec<Vec<usize>> = (0..c.fields.len()).map(|f| c.candidates(f)).collect();
    let total = assignment_count(c);
    let inc = (0..total)
        .into_par_iter()
        .map(|i| -> Result<Incumbents, WaterError> {
            let plan = decode(i, &cands);
            let tr = simulate(c, &plan, horizon, cfg.sim)?;
            let mut inc = Incumbents::default();
            inc.offer(&plan, tr, &ranking);
            Ok(inc)
        })
        .try_reduce(Incumbents::default, |a, b| Ok(a.merge(b)))?;
    finish(c, inc, SearchMethod::Exhaustive, total)
}

/// Precomputed per-step quantities for interval bounds.
struct BoundTables {
    /// `pollution[f][o][t]`
    pollution: Vec<BTreeMap<usize, Vec<f64>>>,
    /// `cost[f][o][t]` = payment + chemical cost attributable to the field.
    cost: Vec<BTreeMap<usize, Vec<f64>>>,
    /// Suffix sums over the search order of per-step minima and maxima for
    /// pollution and cost of unassigned fields.
    free_pollution: Vec<(Vec<f64>, Vec<f64>)>,
    free_cost: Vec<(Vec<f64>, Vec<f64>)>,
    tol: f64,
}

impl BoundTables {
    fn new(c: &Catchment, horizon: usize, order: &[usize]) -> Self {
        let kr = c.finance.chemical_cost_rate;
        let mut pollution = Vec::with_capacity(c.fields.len());
        let mut cost = Vec::with_capacity(c.fields.len());
        for (f, field) in c.fields.iter().enumerate() {
            let mut pf = BTreeMap::new();
            let mut cf = BTreeMap::new();
            for o in c.candidates(f) {
                let opt = &c.options[o];
                let pay = opt.payment_per_ha_per_interval * field.area;
                let p: Vec<f64> = (1..=horizon)
                    .map(|t| {
                        let age = u32::try_from(t - 1).unwrap_or(u32::MAX);
                        field_pollution(field, opt, age, c.rainfall.values[t - 1], c.rain_exponent)
                    })
                    .collect();
                cf.insert(o, p.iter().map(|p| pay + kr * p).collect());
                pf.insert(o, p);
            }
            pollution.push(pf);
            cost.push(cf);
        }
        let suffix = |table: &Vec<BTreeMap<usize, Vec<f64>>>| {
            let mut out = vec![(vec![0.0; horizon], vec![0.0; horizon]); order.len() + 1];
            for d in (0..order.len()).rev() {
                let f = order[d];
                let (mut lo, mut hi) = out[d + 1].clone();
                for t in 0..horizon {
                    let vals = table[f].values().map(|v| v[t]);
                    lo[t] += vals.clone().fold(f64::INFINITY, f64::min);
                    hi[t] += vals.fold(f64::NEG_INFINITY, f64::max);
                }
                out[d] = (lo, hi);
            }
            out
        };
        let free_pollution = suffix(&pollution);
        let free_cost = suffix(&cost);
        let fin = &c.finance;
        let mut scale = fin.initial_balance.abs();
        for t in 0..horizon {
            scale += fin.income_per_interval[t].abs() + fin.other_expenses[t].abs();
            scale += free_cost[0].1[t].abs() + fin.fine_rate * free_pollution[0].1[t];
            scale += match &fin.bond_repayment {
                BondRepayment::Fixed { series } => series[t].abs(),
                BondRepayment::PollutionLinked { base, step_up, .. } => base.abs() + step_up.abs(),
            };
        }
        BoundTables {
            pollution,
            cost,
            free_pollution,
            free_cost,
            tol: 1e-9 * scale.max(1.0),
        }
    }

    /// Upper bounds on `B_t` for every completion of the first `depth`
    /// fields of the search order.
    fn balance_upper(&self, c: &Catchment, order: &[usize], plan: &[usize], depth: usize) -> Vec<f64> {
        let fin = &c.finance;
        let horizon = self.free_cost[0].0.len();
        let (p_free_lo, p_free_hi) = &self.free_pollution[depth];
        let (c_free_lo, c_free_hi) = &self.free_cost[depth];
        let mut upper = Vec::with_capacity(horizon);
        let (mut b_lo, mut b_hi) = (fin.initial_balance, fin.initial_balance);
        let mut prev: Option<(f64, f64)> = None;
        for t in 0..horizon {
            let (mut p_lo, mut p_hi) = (p_free_lo[t], p_free_hi[t]);
            let (mut k_lo, mut k_hi) = (c_free_lo[t], c_free_hi[t]);
            for &f in &order[..depth] {
                p_lo += self.pollution[f][&plan[f]][t];
                p_hi += self.pollution[f][&plan[f]][t];
                k_lo += self.cost[f][&plan[f]][t];
                k_hi += self.cost[f][&plan[f]][t];
            }
            let (r_lo, r_hi) = {
                let a = water::repayment(fin, t + 1, p_lo);
                let b = water::repayment(fin, t + 1, p_hi);
                (a.min(b), a.max(b))
            };
            let (f_lo, f_hi) = match prev {
                None => (0.0, 0.0),
                Some((pp_lo, pp_hi)) => (
                    (fin.fine_rate * pp_lo).min(fin.fine_cap_fraction * b_lo.max(0.0)),
                    (fin.fine_rate * pp_hi).min(fin.fine_cap_fraction * b_hi.max(0.0)),
                ),
            };
            let net = fin.income_per_interval[t] - fin.other_expenses[t];
            b_hi = b_hi + net - k_lo - r_lo - f_lo;
            b_lo = b_lo + net - k_hi - r_hi - f_hi;
            upper.push(b_hi);
            prev = Some((p_lo, p_hi));
        }
        upper
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Goal {
    Objective,
    LeastViolation,
}

struct Search<'a> {
    c: &'a Catchment,
    horizon: usize,
    cfg: &'a OptimizerConfig,
    ranking: Ranking,
    order: Vec<usize>,
    preferred: Vec<Vec<usize>>,
    tables: BoundTables,
    goal: Goal,
    inc: Incumbents,
    evaluated: u64,
}

impl Search<'_> {
    fn incumbent(&self) -> Option<f64> {
        match self.goal {
            Goal::Objective => self.inc.feasible.as_ref().map(|s| s.value),
            Goal::LeastViolation => self.inc.least_violation.as_ref().map(|s| s.value),
        }
    }

    fn descend(&mut self, plan: &mut Plan, depth: usize) -> Result<(), WaterError> {
        if depth == self.order.len() {
            let tr = simulate(self.c, plan, self.horizon, self.cfg.sim)?;
            self.evaluated += 1;
            self.inc.offer(plan, tr, &self.ranking);
            return Ok(());
        }
        let f = self.order[depth];
        for o in self.preferred[f].clone() {
            plan[f] = o;
            let ub = self.tables.balance_upper(self.c, &self.order, plan, depth + 1);
            let tol = self.tables.tol;
            let prune = match self.goal {
                Goal::Objective => {
                    ub.iter().any(|&b| b < -tol)
                        || self.incumbent().is_some_and(|best| ub.iter().sum::<f64>() < best - tol)
                }
                Goal::LeastViolation => {
                    let m = ub.iter().copied().fold(f64::INFINITY, f64::min);
                    self.incumbent().is_some_and(|best| m < best - tol)
                }
            };
            if !prune {
                self.descend(plan, depth + 1)?;
            }
        }
        Ok(())
    }
}

/// Depth-first branch-and-bound over fields ordered by decreasing area.
pub fn branch_and_bound(c: &Catchment, horizon: usize, cfg: &OptimizerConfig) -> Result<Solution, OptimizeError> {
    let none = precheck(c, horizon, cfg)?;
    let mut order: Vec<usize> = (0..c.fields.len()).collect();
    order.sort_by(|&a, &b| {
        c.fields[b]
            .area
            .total_cmp(&c.fields[a].area)
            .then_with(|| c.fields[a].id.cmp(&c.fields[b].id))
    });
    let ranking = Ranking::new(c);
    let preferred = (0..c.fields.len()).map(|f| ranking.ordered(f)).collect();
    let tables = BoundTables::new(c, horizon, &order);
    let mut search = Search {
        c,
        horizon,
        cfg,
        ranking,
        order,
        preferred,
        tables,
        goal: Goal::Objective,
        inc: Incumbents::default(),
        evaluated: 0,
    };
    let mut plan = none.clone();
    search.descend(&mut plan, 0)?;
    if search.inc.feasible.is_none() {
        search.goal = Goal::LeastViolation;
        search.inc.least_violation = None;
        let mut plan = none;
        search.descend(&mut plan, 0)?;
    }
    let evaluated = search.evaluated;
    finish(c, search.inc, SearchMethod::BranchAndBound, evaluated)
}

/// Exhaustive search when the assignment count is within the cap, otherwise
/// branch-and-bound.
pub fn optimize(c: &Catchment, horizon: usize, cfg: &OptimizerConfig) -> Result<Solution, OptimizeError> {
    if assignment_count(c) <= cfg.exhaustive_cap {
        exhaustive_search(c, horizon, cfg)
    } else {
        branch_and_bound(c, horizon, cfg)
    }
}

/// Canonical text key of an assignment, e.g. `f1=none;f2=grass`.
pub fn assignment_key(choices: &BTreeMap<String, String>) -> String {
    choices
        .iter()
        .map(|(f, o)| format!("{f}={o}"))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumDistribution {
    pub n_draws: usize,
    pub seed: u64,
    pub chain_seed: u64,
    pub acceptance_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    /// Assignment key to number of draws it was optimal for.
    pub histogram: BTreeMap<String, usize>,
    pub infeasible: usize,
    /// Over feasible draws only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<Stat>,
}

/// Solves the assignment problem once per parameter draw.
pub fn optimum_distribution(
    c: &Catchment,
    horizon: usize,
    priors: &ParameterPriors,
    settings: &McmcSettings,
    cfg: &OptimizerConfig,
) -> Result<OptimumDistribution, OptimizeError> {
    let sampler = ParameterSampler::new(c, priors)?;
    let draws = sampler.sample(settings, stream::OPTIMUM_PARAMETERS)?;
    let results: Vec<Result<Solution, OptimizeError>> =
        draws.catchments.par_iter().map(|d| optimize(d, horizon, cfg)).collect();
    let mut histogram = BTreeMap::new();
    let mut infeasible = 0;
    let mut objectives = Vec::new();
    for r in results {
        match r {
            Ok(s) => {
                *histogram.entry(assignment_key(&s.assignment.choices)).or_insert(0) += 1;
                objectives.push(s.assignment.objective);
            }
            Err(OptimizeError::Infeasible(_)) => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(OptimumDistribution {
        n_draws: settings.n_draws,
        seed: settings.seed,
        chain_seed: draws.chain_seed,
        acceptance_rate: draws.acceptance_rate,
        warning: draws.warning,
        histogram,
        infeasible,
        objective: (!objectives.is_empty()).then(|| Stat::from_values(&objectives)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::water::{BondRepayment, Field, FinanceParams, NbsKind, NbsOption, RainfallSeries};

    fn opt(id: &str, kind: NbsKind, a: f64, pay: f64) -> NbsOption {
        NbsOption {
            id: id.into(),
            kind,
            absorption_max: a,
            establishment_lag: 0,
            payment_per_ha_per_interval: pay,
        }
    }

    fn one_field(pay: f64, fine_rate: f64, b0: f64) -> Catchment {
        Catchment {
            fields: vec![Field {
                id: "f".into(),
                area: 10.0,
                load_factor: 1.0,
                candidate_options: vec!["none".into(), "buffer".into()],
            }],
            options: vec![
                opt("none", NbsKind::None, 0.0, 0.0),
                opt("buffer", NbsKind::CultivatedBuffer, 0.9, pay),
            ],
            rainfall: RainfallSeries {
                values: vec![10.0, 10.0],
                interval_label: String::new(),
            },
            finance: FinanceParams {
                initial_balance: b0,
                income_per_interval: vec![0.0, 0.0],
                bond_repayment: BondRepayment::Fixed { series: vec![0.0, 0.0] },
                other_expenses: vec![0.0, 0.0],
                chemical_cost_rate: 1.0,
                fine_rate,
                fine_cap_fraction: 1.0,
                reputation_scale: None,
            },
            rain_exponent: 1.0,
        }
    }

    #[test]
    fn dominated_buffer_is_not_chosen() {
        // buffer saves 90 per step in chemicals but costs 500
        let c = one_field(50.0, 0.0, 10_000.0);
        let s = optimize(&c, 2, &OptimizerConfig::default()).unwrap();
        assert_eq!(s.assignment.choices["f"], "none");
        let b = branch_and_bound(&c, 2, &OptimizerConfig::default()).unwrap();
        assert_eq!(b.assignment, s.assignment);
    }

    #[test]
    fn insolvency_forces_buffer() {
        // none: rho = 100 per step, B_1 = 150 - 100, fine 1000 capped at 50 -> B_2 = -100
        // buffer: rho = 10, pay 10 -> B_1 = 130, fine 100 -> B_2 = 10
        let c = one_field(1.0, 10.0, 150.0);
        let s = optimize(&c, 2, &OptimizerConfig::default()).unwrap();
        assert_eq!(s.assignment.choices["f"], "buffer");
        assert!(s.trajectory.first_insolvent_step().is_none());
        let b = branch_and_bound(&c, 2, &OptimizerConfig::default()).unwrap();
        assert_eq!(b.assignment, s.assignment);
    }

    #[test]
    fn infeasible_instance_reports_least_violation() {
        let c = one_field(1.0, 10.0, 5.0);
        let e = optimize(&c, 2, &OptimizerConfig::default()).unwrap_err();
        let OptimizeError::Infeasible(r) = e else { panic!() };
        assert_eq!(r.first_insolvent_step, 1);
        assert_eq!(r.best_violation.choices["f"], "buffer");
        let b = branch_and_bound(&c, 2, &OptimizerConfig::default()).unwrap_err();
        assert_eq!(OptimizeError::Infeasible(r), b);
    }

    #[test]
    fn ties_prefer_higher_absorption() {
        let mut c = one_field(0.0, 0.0, 100.0);
        c.finance.chemical_cost_rate = 0.0;
        let s = optimize(&c, 2, &OptimizerConfig::default()).unwrap();
        assert_eq!(s.assignment.choices["f"], "buffer");
        let b = branch_and_bound(&c, 2, &OptimizerConfig::default()).unwrap();
        assert_eq!(b.assignment, s.assignment);
    }

    #[test]
    fn key_format() {
        let m = BTreeMap::from([("b".to_string(), "x".to_string()), ("a".to_string(), "y".to_string())]);
        assert_eq!(assignment_key(&m), "a=y;b=x");
    }
}
