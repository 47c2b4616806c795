//! Parameter uncertainty: priors over rates, the rain exponent and field load
//! factors, sampled with random-walk Metropolis and pushed through the
//! deterministic pipeline.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{simulate, SimOptions, Trajectory};
use super::{Catchment, WaterError};
use crate::inference::{mh_sample, MhConfig};
use crate::seed::{stream, sub_seed};
use crate::validation::{ptr, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    PointMass { value: f64 },
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    /// `(center, spread)` of the standardized coordinate; spread 0 means the
    /// prior is degenerate.
    fn standardize(&self) -> (f64, f64) {
        match *self {
            Prior::PointMass { value } => (value, 0.0),
            Prior::Uniform { low, high } => (0.5 * (low + high), 0.5 * (high - low)),
            Prior::Normal { mean, sd } => (mean, sd),
        }
    }

    /// Log density of the standardized coordinate, up to a constant.
    fn log_density_z(&self, z: f64) -> f64 {
        match self {
            Prior::PointMass { .. } => 0.0,
            Prior::Uniform { .. } => {
                if z.abs() <= 1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Normal { .. } => -0.5 * z * z,
        }
    }

    fn validate(&self, at: &str, strictly_positive: bool, out: &mut Vec<Violation>) {
        let in_domain = |v: f64| v.is_finite() && if strictly_positive { v > 0.0 } else { v >= 0.0 };
        let bound = if strictly_positive { "positive" } else { "non-negative" };
        match *self {
            Prior::PointMass { value } => {
                if !in_domain(value) {
                    out.push(Violation::new("E_RANGE", ptr(at, "value"), format!("must be {bound}")));
                }
            }
            Prior::Uniform { low, high } => {
                if !in_domain(low) {
                    out.push(Violation::new("E_RANGE", ptr(at, "low"), format!("must be {bound}")));
                }
                if !high.is_finite() || high < low {
                    out.push(Violation::new(
                        "E_RANGE",
                        ptr(at, "high"),
                        "must be finite and at least `low`",
                    ));
                }
            }
            Prior::Normal { mean, sd } => {
                if !in_domain(mean) {
                    out.push(Violation::new("E_RANGE", ptr(at, "mean"), format!("must be {bound}")));
                }
                if !sd.is_finite() || sd < 0.0 {
                    out.push(Violation::new(
                        "E_RANGE",
                        ptr(at, "sd"),
                        "must be finite and non-negative",
                    ));
                }
            }
        }
    }
}

/// Priors over uncertain parameters. Absent entries keep the catchment value.
/// Normal priors are truncated to the parameter's domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPriors {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chemical_cost_rate: Option<Prior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_rate: Option<Prior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rain_exponent: Option<Prior>,
    /// Keyed by field id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub load_factors: BTreeMap<String, Prior>,
}

impl ParameterPriors {
    pub fn validate(&self, catchment: Option<&Catchment>, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, p, positive) in [
            ("chemical_cost_rate", &self.chemical_cost_rate, false),
            ("fine_rate", &self.fine_rate, false),
            ("rain_exponent", &self.rain_exponent, true),
        ] {
            if let Some(p) = p {
                p.validate(&ptr(at, name), positive, &mut out);
            }
        }
        let lat = ptr(at, "load_factors");
        for (id, p) in &self.load_factors {
            p.validate(&ptr(&lat, id), false, &mut out);
            if let Some(c) = catchment {
                if !c.fields.iter().any(|f| &f.id == id) {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&lat, id),
                        format!("unknown field `{id}`"),
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    ChemicalCostRate,
    FineRate,
    RainExponent,
    LoadFactor(usize),
}

impl Target {
    fn set(self, c: &mut Catchment, v: f64) {
        match self {
            Target::ChemicalCostRate => c.finance.chemical_cost_rate = v,
            Target::FineRate => c.finance.fine_rate = v,
            Target::RainExponent => c.rain_exponent = v,
            Target::LoadFactor(f) => c.fields[f].load_factor = v,
        }
    }

    fn in_domain(self, v: f64) -> bool {
        match self {
            Target::RainExponent => v > 0.0,
            _ => v >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McmcSettings {
    pub n_draws: usize,
    pub burn_in: usize,
    /// Random-walk step in standardized prior units.
    pub proposal_scale: f64,
    /// Master run seed; the chain seed is a sub-seed of it.
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            n_draws: 2000,
            burn_in: 500,
            proposal_scale: 0.75,
            seed: 0,
        }
    }
}

/// Parameter draws materialized as catchments.
#[derive(Debug, Clone)]
pub struct ParameterDraws {
    pub catchments: Vec<Catchment>,
    pub chain_seed: u64,
    pub acceptance_rate: f64,
    pub warning: Option<String>,
}

/// Maps standardized coordinates to catchment parameters.
#[derive(Debug, Clone)]
pub struct ParameterSampler {
    base: Catchment,
    dims: Vec<(Target, Prior, f64, f64)>,
}

impl ParameterSampler {
    pub fn new(catchment: &Catchment, priors: &ParameterPriors) -> Result<Self, WaterError> {
        let violations = priors.validate(Some(catchment), "/priors");
        if let Some(v) = violations.first() {
            return Err(WaterError::Config(v.to_string()));
        }
        let mut entries: Vec<(Target, Prior)> = Vec::new();
        for (t, p) in [
            (Target::ChemicalCostRate, priors.chemical_cost_rate),
            (Target::FineRate, priors.fine_rate),
            (Target::RainExponent, priors.rain_exponent),
        ] {
            if let Some(p) = p {
                entries.push((t, p));
            }
        }
        for (f, field) in catchment.fields.iter().enumerate() {
            if let Some(p) = priors.load_factors.get(&field.id) {
                entries.push((Target::LoadFactor(f), *p));
            }
        }
        let mut base = catchment.clone();
        let mut dims = Vec::new();
        for (t, p) in entries {
            let (center, spread) = p.standardize();
            if spread == 0.0 {
                t.set(&mut base, center);
            } else {
                dims.push((t, p, center, spread));
            }
        }
        Ok(ParameterSampler { base, dims })
    }

    /// Number of non-degenerate parameters.
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (&(t, p, center, spread), &zi) in self.dims.iter().zip(z) {
            if !t.in_domain(center + spread * zi) {
                return f64::NEG_INFINITY;
            }
            lp += p.log_density_z(zi);
        }
        lp
    }

    pub fn apply(&self, z: &[f64]) -> Catchment {
        let mut c = self.base.clone();
        for (&(t, _, center, spread), &zi) in self.dims.iter().zip(z) {
            t.set(&mut c, center + spread * zi);
        }
        c
    }

    /// Draws parameters on sub-stream `stream_id` of `settings.seed`. With no
    /// uncertain parameter every draw is the base catchment.
    pub fn sample(&self, settings: &McmcSettings, stream_id: u64) -> Result<ParameterDraws, WaterError> {
        let chain_seed = sub_seed(settings.seed, stream_id);
        if settings.n_draws == 0 {
            return Err(WaterError::Config("n_draws must be at least 1".into()));
        }
        if self.dims.is_empty() {
            return Ok(ParameterDraws {
                catchments: vec![self.base.clone(); settings.n_draws],
                chain_seed,
                acceptance_rate: 1.0,
                warning: None,
            });
        }
        let config = MhConfig {
            proposal_scale: settings.proposal_scale,
            n_draws: settings.n_draws,
            burn_in: settings.burn_in,
            seed: chain_seed,
        };
        let init = vec![0.0; self.dims.len()];
        let batch = mh_sample(|z| self.log_density(z), &init, &config)?;
        Ok(ParameterDraws {
            catchments: batch.draws.iter().map(|z| self.apply(z)).collect(),
            chain_seed,
            acceptance_rate: batch.acceptance_rate,
            warning: batch.warning,
        })
    }
}

/// Mean, sample standard deviation and batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub std_error: f64,
}

const N_BATCHES: usize = 20;

impl Stat {
    pub fn from_values(xs: &[f64]) -> Stat {
        let (mean, var) = welford(xs);
        let sd = var.sqrt();
        let n = xs.len();
        let std_error = if n >= 2 * N_BATCHES {
            let b = n / N_BATCHES;
            let means: Vec<f64> = xs[..b * N_BATCHES].chunks(b).map(|c| welford(c).0).collect();
            (welford(&means).1 / N_BATCHES as f64).sqrt()
        } else if n > 0 {
            sd / (n as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, sd, std_error }
    }
}

fn welford(xs: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = if xs.len() > 1 { m2 / (xs.len() - 1) as f64 } else { 0.0 };
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub t: usize,
    pub pollution: Stat,
    pub chemical_cost: Stat,
    pub fine: Stat,
    pub balance: Stat,
    pub reputation: Stat,
    pub e_score: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcSummary {
    pub n_draws: usize,
    pub seed: u64,
    pub chain_seed: u64,
    pub acceptance_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub steps: Vec<StepSummary>,
    pub final_balance: Stat,
    pub final_reputation: Stat,
    /// Expected reputation loss `1 - reputation` at the horizon.
    pub reputation_loss: Stat,
}

/// Monte Carlo summaries of the pipeline under parameter uncertainty.
pub fn expected_outputs_mcmc(
    catchment: &Catchment,
    plan: &[usize],
    horizon: usize,
    priors: &ParameterPriors,
    settings: &McmcSettings,
    opts: SimOptions,
) -> Result<McmcSummary, WaterError> {
    let sampler = ParameterSampler::new(catchment, priors)?;
    let draws = sampler.sample(settings, stream::WATER_PARAMETERS)?;
    let runs: Vec<Trajectory> = draws
        .catchments
        .par_iter()
        .map(|c| simulate(c, plan, horizon, opts))
        .collect::<Result<_, _>>()?;

    let column =
        |f: &dyn Fn(&Trajectory) -> f64| -> Stat { Stat::from_values(&runs.iter().map(f).collect::<Vec<_>>()) };
    let steps = (0..horizon)
        .map(|i| StepSummary {
            t: i + 1,
            pollution: column(&|r| r.steps[i].pollution),
            chemical_cost: column(&|r| r.steps[i].chemical_cost),
            fine: column(&|r| r.steps[i].fine),
            balance: column(&|r| r.steps[i].balance),
            reputation: column(&|r| r.steps[i].reputation),
            e_score: column(&|r| r.steps[i].e_score),
        })
        .collect();
    Ok(McmcSummary {
        n_draws: settings.n_draws,
        seed: settings.seed,
        chain_seed: draws.chain_seed,
        acceptance_rate: draws.acceptance_rate,
        warning: draws.warning,
        steps,
        final_balance: column(&|r| r.final_balance()),
        final_reputation: column(&|r| r.final_reputation()),
        reputation_loss: column(&|r| 1.0 - r.final_reputation()),
    })
}
