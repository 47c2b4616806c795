//! Water-utility catchment model: field runoff under nature-based solutions,
//! chemical treatment, regulator fines, NbS payments, reputation and the
//! balance-sheet recursion.

mod pipeline;
mod uncertainty;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::InferenceError;
use crate::validation::{check_unit_interval, ptr, Violation};

pub use pipeline::{
    absorption, balance_trajectory, catchment_pollution, chemical_cost, cleanliness, field_pollution, fine, nbs_cost,
    repayment, reputation, simulate, simulate_with, water_e_score, ParametricRunoff, RunoffModel, SimOptions,
    StepRecord, Trajectory,
};
pub use uncertainty::{
    expected_outputs_mcmc, McmcSettings, McmcSummary, ParameterDraws, ParameterPriors, ParameterSampler, Prior, Stat,
    StepSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaterError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("series `{series}` has {found} entries but the horizon needs {needed}")]
    SeriesLength {
        series: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NbsKind {
    None,
    CultivatedBuffer,
    GrasslandBuffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NbsOption {
    pub id: String,
    pub kind: NbsKind,
    /// Fraction of runoff absorbed once fully established, in `[0, 1)`.
    pub absorption_max: f64,
    /// Intervals until full absorption; absorption ramps linearly before that.
    pub establishment_lag: u32,
    pub payment_per_ha_per_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub id: String,
    /// Hectares.
    pub area: f64,
    /// Nutrient export propensity of the field's current state.
    pub load_factor: f64,
    pub candidate_options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainfallSeries {
    /// Millimetres per interval.
    pub values: Vec<f64>,
    #[serde(default)]
    pub interval_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BondRepayment {
    Fixed {
        series: Vec<f64>,
    },
    /// `base + step_up` whenever catchment pollution exceeds `threshold`.
    PollutionLinked {
        base: f64,
        step_up: f64,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinanceParams {
    pub initial_balance: f64,
    pub income_per_interval: Vec<f64>,
    pub bond_repayment: BondRepayment,
    pub other_expenses: Vec<f64>,
    /// Currency per pollution unit treated.
    pub chemical_cost_rate: f64,
    /// Currency per pollution unit of the previous interval.
    pub fine_rate: f64,
    /// Fines never exceed this fraction of the previous (non-negative) balance.
    pub fine_cap_fraction: f64,
    /// Currency scale dividing cumulative fines inside the reputation
    /// exponent. Defaults to the initial balance (or 1 if that is not positive).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reputation_scale: Option<f64>,
}

impl FinanceParams {
    pub fn effective_reputation_scale(&self) -> f64 {
        self.reputation_scale.unwrap_or(if self.initial_balance > 0.0 {
            self.initial_balance
        } else {
            1.0
        })
    }
}

fn default_rain_exponent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catchment {
    pub fields: Vec<Field>,
    pub options: Vec<NbsOption>,
    pub rainfall: RainfallSeries,
    pub finance: FinanceParams,
    /// Exponent on rainfall in the runoff model.
    #[serde(default = "default_rain_exponent")]
    pub rain_exponent: f64,
}

/// Chosen option per field as indices into `Catchment::options`, aligned with
/// `Catchment::fields`.
pub type Plan = Vec<usize>;

impl Catchment {
    pub fn option_index(&self, id: &str) -> Option<usize> {
        self.options.iter().position(|o| o.id == id)
    }

    /// Candidate option indices of field `f`.
    pub fn candidates(&self, f: usize) -> Vec<usize> {
        self.fields[f]
            .candidate_options
            .iter()
            .filter_map(|id| self.option_index(id))
            .collect()
    }

    /// The `none` candidate of each field.
    pub fn all_none(&self) -> Result<Plan, WaterError> {
        (0..self.fields.len())
            .map(|f| {
                self.candidates(f)
                    .into_iter()
                    .find(|&o| self.options[o].kind == NbsKind::None)
                    .ok_or_else(|| WaterError::Config(format!("field `{}` has no `none` option", self.fields[f].id)))
            })
            .collect()
    }

    /// Resolves a field-id → option-id map; unlisted fields take `none`.
    pub fn resolve_plan(&self, choices: &BTreeMap<String, String>) -> Result<Plan, WaterError> {
        for f in choices.keys() {
            if !self.fields.iter().any(|x| &x.id == f) {
                return Err(WaterError::Config(format!("unknown field `{f}`")));
            }
        }
        let mut plan = self.all_none()?;
        for (f, field) in self.fields.iter().enumerate() {
            if let Some(opt) = choices.get(&field.id) {
                if !field.candidate_options.contains(opt) {
                    return Err(WaterError::Config(format!(
                        "option `{opt}` is not a candidate of field `{}`",
                        field.id
                    )));
                }
                plan[f] = self
                    .option_index(opt)
                    .ok_or_else(|| WaterError::Config(format!("unknown option `{opt}`")))?;
            }
        }
        Ok(plan)
    }

    pub fn plan_ids(&self, plan: &[usize]) -> BTreeMap<String, String> {
        self.fields
            .iter()
            .zip(plan)
            .map(|(f, &o)| (f.id.clone(), self.options[o].id.clone()))
            .collect()
    }

    /// Longest horizon all series support.
    pub fn max_horizon(&self) -> usize {
        let mut h = self
            .rainfall
            .values
            .len()
            .min(self.finance.income_per_interval.len())
            .min(self.finance.other_expenses.len());
        if let BondRepayment::Fixed { series } = &self.finance.bond_repayment {
            h = h.min(series.len());
        }
        h
    }

    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let oat = ptr(at, "options");
        let mut ids = BTreeSet::new();
        for (i, o) in self.options.iter().enumerate() {
            let at_o = ptr(&oat, i);
            if !ids.insert(o.id.as_str()) {
                out.push(Violation::new(
                    "E_DUPLICATE_ID",
                    ptr(&at_o, "id"),
                    format!("option `{}` repeated", o.id),
                ));
            }
            if !o.absorption_max.is_finite() || !(0.0..1.0).contains(&o.absorption_max) {
                out.push(Violation::new(
                    "E_RANGE",
                    ptr(&at_o, "absorption_max"),
                    format!("absorption {} outside [0, 1)", o.absorption_max),
                ));
            }
            if !o.payment_per_ha_per_interval.is_finite() || o.payment_per_ha_per_interval < 0.0 {
                out.push(Violation::new(
                    "E_RANGE",
                    ptr(&at_o, "payment_per_ha_per_interval"),
                    "payment must be non-negative",
                ));
            }
            if o.kind == NbsKind::None && (o.absorption_max != 0.0 || o.payment_per_ha_per_interval != 0.0) {
                out.push(Violation::new(
                    "E_NONE_OPTION",
                    at_o,
                    format!("option `{}` of kind none must have zero absorption and payment", o.id),
                ));
            }
        }

        let fat = ptr(at, "fields");
        let mut fids = BTreeSet::new();
        for (i, f) in self.fields.iter().enumerate() {
            let at_f = ptr(&fat, i);
            if !fids.insert(f.id.as_str()) {
                out.push(Violation::new(
                    "E_DUPLICATE_ID",
                    ptr(&at_f, "id"),
                    format!("field `{}` repeated", f.id),
                ));
            }
            if !f.area.is_finite() || f.area <= 0.0 {
                out.push(Violation::new("E_RANGE", ptr(&at_f, "area"), "area must be positive"));
            }
            if !f.load_factor.is_finite() || f.load_factor < 0.0 {
                out.push(Violation::new(
                    "E_RANGE",
                    ptr(&at_f, "load_factor"),
                    "load factor must be non-negative",
                ));
            }
            let cat = ptr(&at_f, "candidate_options");
            let mut seen = BTreeSet::new();
            for (j, c) in f.candidate_options.iter().enumerate() {
                if !seen.insert(c) {
                    out.push(Violation::new(
                        "E_DUPLICATE_ID",
                        ptr(&cat, j),
                        format!("candidate `{c}` repeated"),
                    ));
                }
                if self.option_index(c).is_none() {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&cat, j),
                        format!("unknown option `{c}`"),
                    ));
                }
            }
            let has_none = f.candidate_options.iter().any(|c| {
                self.option_index(c)
                    .is_some_and(|o| self.options[o].kind == NbsKind::None)
            });
            if !has_none {
                out.push(Violation::new(
                    "E_MISSING",
                    cat,
                    format!("field `{}` must offer a `none` option", f.id),
                ));
            }
        }

        let rat = ptr(&ptr(at, "rainfall"), "values");
        for (i, r) in self.rainfall.values.iter().enumerate() {
            if !r.is_finite() || *r < 0.0 {
                out.push(Violation::new("E_RANGE", ptr(&rat, i), "rainfall must be non-negative"));
            }
        }
        if !self.rain_exponent.is_finite() || self.rain_exponent <= 0.0 {
            out.push(Violation::new(
                "E_RANGE",
                ptr(at, "rain_exponent"),
                "rain exponent must be positive",
            ));
        }

        let fin = &self.finance;
        let fat = ptr(at, "finance");
        for (name, v) in [
            ("chemical_cost_rate", fin.chemical_cost_rate),
            ("fine_rate", fin.fine_rate),
        ] {
            if !v.is_finite() || v < 0.0 {
                out.push(Violation::new(
                    "E_RANGE",
                    ptr(&fat, name),
                    format!("{name} must be non-negative"),
                ));
            }
        }
        check_unit_interval(&mut out, &ptr(&fat, "fine_cap_fraction"), fin.fine_cap_fraction);
        if !fin.initial_balance.is_finite() {
            out.push(Violation::new(
                "E_RANGE",
                ptr(&fat, "initial_balance"),
                "must be finite",
            ));
        }
        if let Some(s) = fin.reputation_scale {
            if !s.is_finite() || s <= 0.0 {
                out.push(Violation::new(
                    "E_RANGE",
                    ptr(&fat, "reputation_scale"),
                    "reputation scale must be positive",
                ));
            }
        }
        let n = self.rainfall.values.len();
        let mut series: Vec<(&str, &Vec<f64>)> = vec![
            ("income_per_interval", &fin.income_per_interval),
            ("other_expenses", &fin.other_expenses),
        ];
        match &fin.bond_repayment {
            BondRepayment::Fixed { series: s } => series.push(("bond_repayment/series", s)),
            BondRepayment::PollutionLinked {
                base,
                step_up,
                threshold,
            } => {
                for (name, v) in [("base", base), ("step_up", step_up), ("threshold", threshold)] {
                    if !v.is_finite() {
                        out.push(Violation::new(
                            "E_RANGE",
                            format!("{}/bond_repayment/{name}", fat),
                            "must be finite",
                        ));
                    }
                }
            }
        }
        for (name, s) in series {
            let sat = format!("{fat}/{name}");
            if s.len() != n {
                out.push(Violation::new(
                    "E_LENGTH",
                    sat.clone(),
                    format!("{} entries but rainfall has {n}", s.len()),
                ));
            }
            for (i, v) in s.iter().enumerate() {
                if !v.is_finite() {
                    out.push(Violation::new("E_RANGE", ptr(&sat, i), "must be finite"));
                }
            }
        }
        out
    }
}
