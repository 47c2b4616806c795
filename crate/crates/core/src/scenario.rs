//! Scenario edits on a beef supply chain: portfolio weighting, divestment and
//! embargo dynamics under a legislation strength.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beef::{
    self, compile_with_survival, score_supplier, sourcing_mass, BeefError, FarmStateModel, SupplierScores,
    SupplyChainGraph, VAR_ALIVE, VAR_C, VAR_L,
};
use crate::inference::{marginalize, Evidence};
use crate::validation::{check_unit_interval, ptr, Violation, SUM_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("supplier `{supplier}` has no valid sourcing left{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NoValidSourcing { supplier: String, step: Option<usize> },
    #[error(transparent)]
    Beef(#[from] BeefError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Portfolio,
    Divestment,
    EmbargoDynamics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivestEdge {
    pub supplier: String,
    pub abattoir: String,
}

fn default_horizon() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// `p(B | portfolio)`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub portfolio_weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub divest_edges: Vec<DivestEdge>,
    /// Per-step survival probability, keyed by legislation strength then
    /// farm state label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub survival_table: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legislation_strength: Option<String>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_true")]
    pub renormalize: bool,
}

impl ScenarioSpec {
    pub fn validate(
        &self,
        graph: Option<&SupplyChainGraph>,
        states: Option<&FarmStateModel>,
        at: &str,
    ) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.horizon == 0 {
            out.push(Violation::new(
                "E_RANGE",
                ptr(at, "horizon"),
                "horizon must be at least 1",
            ));
        }
        let wat = ptr(at, "portfolio_weights");
        if self.kind == ScenarioKind::Portfolio {
            if self.portfolio_weights.is_empty() {
                out.push(Violation::new("E_MISSING", wat.clone(), "portfolio needs weights"));
            } else {
                let sum: f64 = self.portfolio_weights.values().sum();
                if (sum - 1.0).abs() > SUM_TOL {
                    out.push(Violation::new(
                        "E_SUM",
                        wat.clone(),
                        format!("portfolio weights sum to {sum}, expected 1"),
                    ));
                }
            }
        }
        for (s, w) in &self.portfolio_weights {
            check_unit_interval(&mut out, &ptr(&wat, s), *w);
            if graph.is_some_and(|g| !g.has_supplier(s)) {
                out.push(Violation::new(
                    "E_DANGLING_ID",
                    ptr(&wat, s),
                    format!("unknown supplier `{s}`"),
                ));
            }
        }
        if let Some(g) = graph {
            for (i, e) in self.divest_edges.iter().enumerate() {
                let eat = ptr(&ptr(at, "divest_edges"), i);
                if !g.has_supplier(&e.supplier) {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&eat, "supplier"),
                        format!("unknown supplier `{}`", e.supplier),
                    ));
                }
                if g.abattoir_index(&e.abattoir).is_none() {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&eat, "abattoir"),
                        format!("unknown abattoir `{}`", e.abattoir),
                    ));
                }
            }
        }
        let sat = ptr(at, "survival_table");
        for (strength, row) in &self.survival_table {
            for (state, p) in row {
                check_unit_interval(&mut out, &ptr(&ptr(&sat, strength), state), *p);
                if states.is_some_and(|s| s.state_index(state).is_none()) {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&ptr(&sat, strength), state),
                        format!("unknown farm state `{state}`"),
                    ));
                }
            }
        }
        if self.kind == ScenarioKind::EmbargoDynamics {
            match &self.legislation_strength {
                None => out.push(Violation::new(
                    "E_MISSING",
                    ptr(at, "legislation_strength"),
                    "embargo dynamics need a legislation strength",
                )),
                Some(l) => match self.survival_table.get(l) {
                    None => out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(at, "legislation_strength"),
                        format!("no survival row for legislation strength `{l}`"),
                    )),
                    Some(row) => {
                        if let Some(states) = states {
                            for label in &states.state_labels {
                                if !row.contains_key(label) {
                                    out.push(Violation::new(
                                        "E_MISSING",
                                        ptr(&sat, l),
                                        format!("no survival probability for state `{label}`"),
                                    ));
                                }
                            }
                        }
                    }
                },
            }
        }
        out
    }

    /// Survival probability per state label, in state-model order.
    pub fn survival_by_state(&self, states: &FarmStateModel) -> Result<Vec<f64>, ScenarioError> {
        let strength = self
            .legislation_strength
            .as_deref()
            .ok_or_else(|| ScenarioError::Config("no legislation strength".into()))?;
        let row = self
            .survival_table
            .get(strength)
            .ok_or_else(|| ScenarioError::Config(format!("no survival row for `{strength}`")))?;
        states
            .state_labels
            .iter()
            .map(|l| {
                row.get(l)
                    .copied()
                    .ok_or_else(|| ScenarioError::Config(format!("no survival probability for state `{l}`")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioScore {
    pub forest: f64,
    pub nrp: f64,
}

/// Investment-weighted forest and NRP E-scores.
pub fn portfolio_e_score(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    spec: &ScenarioSpec,
) -> Result<PortfolioScore, ScenarioError> {
    let mut forest = 0.0;
    let mut nrp = 0.0;
    for (supplier, w) in &spec.portfolio_weights {
        if !graph.has_supplier(supplier) {
            return Err(ScenarioError::Config(format!(
                "portfolio weight on unknown supplier `{supplier}`"
            )));
        }
        forest += w * beef::e_score_forest(graph, states, supplier)?;
        nrp += w * beef::e_score_nrp(graph, states, supplier)?;
    }
    Ok(PortfolioScore { forest, nrp })
}

/// Zeroes the listed supplier→abattoir edges. With `renormalize`, each
/// affected supplier's row is rescaled to sum to one; otherwise it is left
/// sub-normalized and the deficit counts as unsourced.
pub fn apply_divestment(graph: &SupplyChainGraph, spec: &ScenarioSpec) -> Result<SupplyChainGraph, ScenarioError> {
    let mut out = graph.clone();
    let mut touched: Vec<&str> = Vec::new();
    for edge in &spec.divest_edges {
        if !graph.has_supplier(&edge.supplier) {
            return Err(ScenarioError::Config(format!("unknown supplier `{}`", edge.supplier)));
        }
        if graph.abattoir_index(&edge.abattoir).is_none() {
            return Err(ScenarioError::Config(format!("unknown abattoir `{}`", edge.abattoir)));
        }
        let row = out.sourcing_b_to_a.entry(edge.supplier.clone()).or_default();
        if let Some(p) = row.get_mut(&edge.abattoir) {
            if *p != 0.0 {
                *p = 0.0;
                if !touched.contains(&edge.supplier.as_str()) {
                    touched.push(&edge.supplier);
                }
            }
        }
    }
    if spec.renormalize {
        for supplier in touched {
            let row = out.sourcing_b_to_a.get_mut(supplier).unwrap();
            let total: f64 = row.values().sum();
            if !(total > 0.0) {
                return Err(ScenarioError::NoValidSourcing {
                    supplier: supplier.to_string(),
                    step: None,
                });
            }
            for p in row.values_mut() {
                *p /= total;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionStep {
    pub step: usize,
    pub expected_return: f64,
    pub e_score_forest: f64,
    /// Probability mass of supply paths whose origin farm is still active.
    pub surviving_mass: f64,
}

/// Per-step return and forest score as embargoes remove farms.
///
/// A farm in state `s` survives each step with the tabled probability, so it
/// is still active at step `t` with probability `survival(s)^t`. Removed farms
/// supply no cattle. With `renormalize` the forest score averages over
/// surviving paths only; without it removed mass simply contributes no
/// compliance.
pub fn embargo_projection(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    spec: &ScenarioSpec,
    supplier: &str,
) -> Result<Vec<ProjectionStep>, ScenarioError> {
    let survival = spec.survival_by_state(states)?;
    let mass = sourcing_mass(graph, supplier)?;
    let mut steps = Vec::with_capacity(spec.horizon + 1);
    for t in 0..=spec.horizon {
        let alive: Vec<f64> = survival.iter().map(|s| s.powi(t as i32)).collect();
        if alive.iter().all(|&a| a == 1.0) {
            steps.push(ProjectionStep {
                step: t,
                expected_return: beef::expected_return(graph, states, supplier)?,
                e_score_forest: beef::e_score_forest(graph, states, supplier)?,
                surviving_mass: mass,
            });
            continue;
        }
        if !(mass > 0.0) {
            if spec.renormalize {
                return Err(ScenarioError::NoValidSourcing {
                    supplier: supplier.to_string(),
                    step: Some(t),
                });
            }
            steps.push(ProjectionStep {
                step: t,
                expected_return: 0.0,
                e_score_forest: 0.0,
                surviving_mass: 0.0,
            });
            continue;
        }
        let model = compile_with_survival(graph, states, supplier, Some(&alive))?;
        let none = Evidence::new();
        let l_alive = marginalize(&model, &[VAR_L, VAR_ALIVE], &none).map_err(BeefError::from)?;
        let c_alive = marginalize(&model, &[VAR_C, VAR_ALIVE], &none).map_err(BeefError::from)?;
        // row-major (L, Alive): index 2 * l + alive
        let lv = l_alive.values();
        let p_alive = lv[1] + lv[3];
        let compliant_alive = lv[3];
        let head: f64 = states
            .cattle_levels
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * c_alive.values()[2 * k + 1])
            .sum();

        let e_score_forest = if spec.renormalize {
            if !(p_alive > 0.0) {
                return Err(ScenarioError::NoValidSourcing {
                    supplier: supplier.to_string(),
                    step: Some(t),
                });
            }
            compliant_alive / p_alive
        } else {
            mass * compliant_alive
        };
        steps.push(ProjectionStep {
            step: t,
            expected_return: graph.return_per_head * mass * head,
            e_score_forest,
            surviving_mass: mass * p_alive,
        });
    }
    Ok(steps)
}

/// Outcome of a scenario over every supplier of a graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioOutcome {
    Portfolio {
        portfolio: PortfolioScore,
        suppliers: Vec<SupplierScores>,
    },
    Divestment {
        before: Vec<SupplierScores>,
        after: Vec<SupplierScores>,
    },
    EmbargoDynamics {
        legislation_strength: String,
        renormalize: bool,
        projections: BTreeMap<String, Vec<ProjectionStep>>,
    },
}

pub fn run_scenario(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    spec: &ScenarioSpec,
) -> Result<ScenarioOutcome, ScenarioError> {
    let score_all = |g: &SupplyChainGraph| -> Result<Vec<SupplierScores>, ScenarioError> {
        g.suppliers
            .iter()
            .map(|s| score_supplier(g, states, s).map_err(ScenarioError::from))
            .collect()
    };
    Ok(match spec.kind {
        ScenarioKind::Portfolio => ScenarioOutcome::Portfolio {
            portfolio: portfolio_e_score(graph, states, spec)?,
            suppliers: spec
                .portfolio_weights
                .keys()
                .map(|s| score_supplier(graph, states, s).map_err(ScenarioError::from))
                .collect::<Result<_, _>>()?,
        },
        ScenarioKind::Divestment => {
            let edited = apply_divestment(graph, spec)?;
            ScenarioOutcome::Divestment {
                before: score_all(graph)?,
                after: score_all(&edited)?,
            }
        }
        ScenarioKind::EmbargoDynamics => {
            let mut projections = BTreeMap::new();
            for s in &graph.suppliers {
                projections.insert(s.clone(), embargo_projection(graph, states, spec, s)?);
            }
            ScenarioOutcome::EmbargoDynamics {
                legislation_strength: spec.legislation_strength.clone().unwrap_or_default(),
                renormalize: spec.renormalize,
                projections,
            }
        }
    })
}
