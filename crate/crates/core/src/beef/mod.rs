//! Beef value-chain model: supplier → abattoir → direct farm → origin farm →
//! farm state → {compliance, NRP impact, cattle}.

mod chain;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::InferenceError;
use crate::validation::{check_distribution, check_unit_interval, ptr, Violation, SUM_TOL};

pub use chain::{
    actor_e_score, compile_chain, compliance_probability, e_score_forest, e_score_nrp, expected_return,
    farm_state_distribution, nrp_distribution, score_supplier, sourcing_mass, ActorKind, ScoreKind, SupplierScores,
    VAR_A, VAR_C, VAR_F, VAR_FD, VAR_L, VAR_N, VAR_S,
};
pub(crate) use chain::{compile_with_survival, VAR_ALIVE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeefError {
    #[error("unknown supplier `{0}`")]
    UnknownSupplier(String),
    #[error("unknown actor `{0}` (neither an abattoir nor a farm)")]
    UnknownActor(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarAssessment {
    /// Externally supplied probability that the farm's CAR report is accurate.
    pub p_car_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunderingSource {
    pub source: String,
    /// Probability that cattle arriving at this farm came from `source`.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Farm {
    pub id: String,
    pub car_assessment: CarAssessment,
    pub state_given_car_true: Vec<f64>,
    pub state_given_car_false: Vec<f64>,
    #[serde(default)]
    pub laundering_sources: Vec<LaunderingSource>,
}

impl Farm {
    /// Probability that cattle at this farm were raised here.
    pub fn self_origination(&self) -> f64 {
        1.0 - self.laundering_sources.iter().map(|s| s.probability).sum::<f64>()
    }
}

/// Descriptive regional context; never used in arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegalReserve {
    pub biome: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmStateModel {
    pub state_labels: Vec<String>,
    /// `p(L = 1 | S)` per state.
    pub p_compliance_given_state: Vec<f64>,
    /// `p(N | S)`: one distribution over `nrp_bins` per state.
    pub nrp_given_state: Vec<Vec<f64>>,
    /// `p(C | S)`: one distribution over `cattle_levels` per state.
    pub cattle_given_state: Vec<Vec<f64>>,
    #[serde(default = "default_nrp_bins")]
    pub nrp_bins: Vec<f64>,
    pub cattle_levels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub legal_reserve: Vec<LegalReserve>,
}

/// Eleven uniform midpoints 0.0, 0.1, ..., 1.0.
pub fn default_nrp_bins() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Legal Reserve fractions of the Forest Code by biome.
pub fn forest_code_legal_reserve() -> Vec<LegalReserve> {
    [("amazon", 0.80), ("cerrado", 0.35), ("pantanal", 0.20)]
        .into_iter()
        .map(|(b, f)| LegalReserve {
            biome: b.to_string(),
            fraction: f,
        })
        .collect()
}

impl FarmStateModel {
    /// Three-state reference model: compliant-intact, compliant-degraded,
    /// violating.
    pub fn three_state_default() -> Self {
        let bins = default_nrp_bins();
        let point = |b: usize| {
            let mut v = vec![0.0; bins.len()];
            v[b] = 1.0;
            v
        };
        FarmStateModel {
            state_labels: vec![
                "compliant-intact".into(),
                "compliant-degraded".into(),
                "violating".into(),
            ],
            p_compliance_given_state: vec![1.0, 1.0, 0.0],
            nrp_given_state: vec![point(9), point(6), point(2)],
            cattle_given_state: vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0]],
            nrp_bins: bins,
            cattle_levels: vec![0, 500, 2000],
            legal_reserve: forest_code_legal_reserve(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }

    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.state_labels.len();
        if n == 0 {
            out.push(Violation::new("E_EMPTY", ptr(at, "state_labels"), "no farm states"));
        }
        let mut seen = BTreeSet::new();
        for (i, l) in self.state_labels.iter().enumerate() {
            if !seen.insert(l) {
                out.push(Violation::new(
                    "E_DUPLICATE_ID",
                    ptr(&ptr(at, "state_labels"), i),
                    format!("state label `{l}` repeated"),
                ));
            }
        }
        let at_c = ptr(at, "p_compliance_given_state");
        if self.p_compliance_given_state.len() != n {
            out.push(Violation::new(
                "E_LENGTH",
                at_c.clone(),
                format!("expected {n} entries, found {}", self.p_compliance_given_state.len()),
            ));
        }
        for (i, p) in self.p_compliance_given_state.iter().enumerate() {
            check_unit_interval(&mut out, &ptr(&at_c, i), *p);
        }

        let at_b = ptr(at, "nrp_bins");
        if self.nrp_bins.is_empty() {
            out.push(Violation::new("E_EMPTY", at_b.clone(), "no NRP bins"));
        }
        for (i, b) in self.nrp_bins.iter().enumerate() {
            check_unit_interval(&mut out, &ptr(&at_b, i), *b);
            if i > 0 && !(*b > self.nrp_bins[i - 1]) {
                out.push(Violation::new(
                    "E_ORDER",
                    ptr(&at_b, i),
                    "NRP bin midpoints must be strictly increasing",
                ));
            }
        }
        if self.cattle_levels.is_empty() {
            out.push(Violation::new("E_EMPTY", ptr(at, "cattle_levels"), "no cattle levels"));
        }

        for (field, table, width) in [
            ("nrp_given_state", &self.nrp_given_state, self.nrp_bins.len()),
            ("cattle_given_state", &self.cattle_given_state, self.cattle_levels.len()),
        ] {
            let at_t = ptr(at, field);
            if table.len() != n {
                out.push(Violation::new(
                    "E_LENGTH",
                    at_t.clone(),
                    format!("expected {n} rows, found {}", table.len()),
                ));
            }
            for (i, row) in table.iter().enumerate() {
                check_distribution(&mut out, &ptr(&at_t, i), row, Some(width));
            }
        }
        for (i, lr) in self.legal_reserve.iter().enumerate() {
            check_unit_interval(
                &mut out,
                &ptr(&ptr(&ptr(at, "legal_reserve"), i), "fraction"),
                lr.fraction,
            );
        }
        out
    }
}

/// Sourcing rows keyed by the upstream actor, each a distribution over
/// downstream ids.
pub type SourcingTable = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyChainGraph {
    pub suppliers: Vec<String>,
    pub abattoirs: Vec<String>,
    pub farms: Vec<Farm>,
    /// `p(A | B, D)` per supplier.
    pub sourcing_b_to_a: SourcingTable,
    /// `p(F_D | A, D)` per abattoir.
    pub sourcing_a_to_f: SourcingTable,
    /// Expected return to the investor per head of cattle.
    pub return_per_head: f64,
}

impl SupplyChainGraph {
    pub fn farm(&self, id: &str) -> Option<&Farm> {
        self.farms.iter().find(|f| f.id == id)
    }

    pub fn farm_index(&self, id: &str) -> Option<usize> {
        self.farms.iter().position(|f| f.id == id)
    }

    pub fn abattoir_index(&self, id: &str) -> Option<usize> {
        self.abattoirs.iter().position(|a| a == id)
    }

    pub fn has_supplier(&self, id: &str) -> bool {
        self.suppliers.iter().any(|s| s == id)
    }

    /// Every invariant of the graph against a state model. Empty means valid.
    pub fn validate(&self, states: &FarmStateModel, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_states = states.n_states();

        let named = self
            .suppliers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), "supplier", ptr(&ptr(at, "suppliers"), i)))
            .chain(
                self.abattoirs
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (a.as_str(), "abattoir", ptr(&ptr(at, "abattoirs"), i))),
            )
            .chain(
                self.farms
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (f.id.as_str(), "farm", ptr(&ptr(&ptr(at, "farms"), i), "id"))),
            );
        let mut ids: HashMap<&str, &str> = HashMap::new();
        for (id, kind, pointer) in named {
            if let Some(prev) = ids.insert(id, kind) {
                out.push(Violation::new(
                    "E_DUPLICATE_ID",
                    pointer,
                    format!("id `{id}` already used by a {prev}"),
                ));
            }
        }

        if !self.return_per_head.is_finite() || self.return_per_head <= 0.0 {
            out.push(Violation::new(
                "E_RANGE",
                ptr(at, "return_per_head"),
                format!("return per head must be positive, got {}", self.return_per_head),
            ));
        }

        for (i, farm) in self.farms.iter().enumerate() {
            let fat = ptr(&ptr(at, "farms"), i);
            check_unit_interval(
                &mut out,
                &ptr(&ptr(&fat, "car_assessment"), "p_car_true"),
                farm.car_assessment.p_car_true,
            );
            check_distribution(
                &mut out,
                &ptr(&fat, "state_given_car_true"),
                &farm.state_given_car_true,
                Some(n_states),
            );
            check_distribution(
                &mut out,
                &ptr(&fat, "state_given_car_false"),
                &farm.state_given_car_false,
                Some(n_states),
            );
            let lat = ptr(&fat, "laundering_sources");
            for (j, src) in farm.laundering_sources.iter().enumerate() {
                let sat = ptr(&lat, j);
                check_unit_interval(&mut out, &ptr(&sat, "probability"), src.probability);
                if src.source == farm.id {
                    out.push(Violation::new(
                        "E_SELF_LOOP",
                        ptr(&sat, "source"),
                        format!("farm `{}` lists itself as a laundering source", farm.id),
                    ));
                } else if self.farm(&src.source).is_none() {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&sat, "source"),
                        format!("unknown farm `{}`", src.source),
                    ));
                }
            }
            let own = farm.self_origination();
            if own < -SUM_TOL {
                out.push(Violation::new(
                    "E_SUM",
                    lat,
                    format!(
                        "laundering probabilities of farm `{}` sum above 1 (self-origination {own})",
                        farm.id
                    ),
                ));
            }
        }
        if let Some(cycle) = self.laundering_cycle() {
            out.push(Violation::new(
                "E_CYCLE",
                ptr(at, "farms"),
                format!("laundering edges form a cycle through `{cycle}`"),
            ));
        }

        self.validate_sourcing(
            &mut out,
            &ptr(at, "sourcing_b_to_a"),
            &self.sourcing_b_to_a,
            &self.suppliers,
            "supplier",
            |id| self.abattoir_index(id).is_some(),
            "abattoir",
        );
        let abattoirs = self.abattoirs.clone();
        self.validate_sourcing(
            &mut out,
            &ptr(at, "sourcing_a_to_f"),
            &self.sourcing_a_to_f,
            &abattoirs,
            "abattoir",
            |id| self.farm_index(id).is_some(),
            "farm",
        );
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn validate_sourcing(
        &self,
        out: &mut Vec<Violation>,
        at: &str,
        table: &SourcingTable,
        upstream: &[String],
        upstream_kind: &str,
        downstream_exists: impl Fn(&str) -> bool,
        downstream_kind: &str,
    ) {
        for key in table.keys() {
            if !upstream.contains(key) {
                out.push(Violation::new(
                    "E_DANGLING_ID",
                    ptr(at, key),
                    format!("unknown {upstream_kind} `{key}`"),
                ));
            }
        }
        for up in upstream {
            let rat = ptr(at, up);
            let Some(row) = table.get(up) else {
                out.push(Violation::new(
                    "E_MISSING",
                    rat,
                    format!("{upstream_kind} `{up}` has no sourcing distribution"),
                ));
                continue;
            };
            for (down, p) in row {
                if !downstream_exists(down) {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&rat, down),
                        format!("unknown {downstream_kind} `{down}`"),
                    ));
                }
                check_unit_interval(out, &ptr(&rat, down), *p);
            }
            let sum: f64 = row.values().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                out.push(Violation::new(
                    "E_SUM",
                    rat,
                    format!("sourcing distribution of {upstream_kind} `{up}` sums to {sum}, expected 1"),
                ));
            }
        }
    }

    /// A farm on a laundering cycle, if any.
    fn laundering_cycle(&self) -> Option<String> {
        // edges destination -> source
        let n = self.farms.len();
        let mut state = vec![0u8; n]; // 0 new, 1 on stack, 2 done
        fn visit(g: &SupplyChainGraph, v: usize, state: &mut [u8]) -> Option<usize> {
            state[v] = 1;
            for src in &g.farms[v].laundering_sources {
                let Some(w) = g.farm_index(&src.source) else { continue };
                match state[w] {
                    1 => return Some(w),
                    0 => {
                        if let Some(c) = visit(g, w, state) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            state[v] = 2;
            None
        }
        (0..n).find_map(|v| {
            if state[v] == 0 {
                visit(self, v, &mut state).map(|c| self.farms[c].id.clone())
            } else {
                None
            }
        })
    }
}
