use serde::Serialize;

use super::{BondRepayment, Catchment, Field, FinanceParams, NbsOption, WaterError};

/// Field runoff model. Implementations must be pure.
pub trait RunoffModel: Sync {
    fn pollution(&self, field: &Field, option: &NbsOption, age: u32, rain: f64) -> f64;
}

/// `area * load * rain^beta * (1 - absorption(option, age))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricRunoff {
    pub rain_exponent: f64,
}

impl RunoffModel for ParametricRunoff {
    fn pollution(&self, field: &Field, option: &NbsOption, age: u32, rain: f64) -> f64 {
        field_pollution(field, option, age, rain, self.rain_exponent)
    }
}

/// Absorbed fraction `age` intervals after establishment: a linear ramp to
/// `absorption_max` over the establishment lag.
pub fn absorption(option: &NbsOption, age: u32) -> f64 {
    if option.establishment_lag == 0 || age >= option.establishment_lag {
        option.absorption_max
    } else {
        option.absorption_max * f64::from(age) / f64::from(option.establishment_lag)
    }
}

pub fn field_pollution(field: &Field, option: &NbsOption, age: u32, rain: f64, rain_exponent: f64) -> f64 {
    field.area * field.load_factor * rain.powf(rain_exponent) * (1.0 - absorption(option, age))
}

/// Total pollution at 1-based step `t`. Options are established at the start
/// of step 1, so their age at step `t` is `t - 1`.
pub fn catchment_pollution(catchment: &Catchment, plan: &[usize], t: usize, runoff: &dyn RunoffModel) -> f64 {
    let rain = catchment.rainfall.values[t - 1];
    let age = u32::try_from(t - 1).unwrap_or(u32::MAX);
    catchment
        .fields
        .iter()
        .zip(plan)
        .map(|(f, &o)| runoff.pollution(f, &catchment.options[o], age, rain))
        .sum()
}

pub fn chemical_cost(finance: &FinanceParams, pollution: f64) -> f64 {
    finance.chemical_cost_rate * pollution
}

/// Fine charged for the previous interval's pollution, capped at a fraction
/// of the previous balance. `None` means there was no previous interval.
pub fn fine(finance: &FinanceParams, previous: Option<(f64, f64)>) -> f64 {
    match previous {
        None => 0.0,
        Some((pollution_prev, balance_prev)) => {
            (finance.fine_rate * pollution_prev).min(finance.fine_cap_fraction * balance_prev.max(0.0))
        }
    }
}

/// NbS payments per interval. Payments are constant over time.
pub fn nbs_cost(catchment: &Catchment, plan: &[usize]) -> f64 {
    catchment
        .fields
        .iter()
        .zip(plan)
        .map(|(f, &o)| catchment.options[o].payment_per_ha_per_interval * f.area)
        .sum()
}

pub fn repayment(finance: &FinanceParams, t: usize, pollution: f64) -> f64 {
    match &finance.bond_repayment {
        BondRepayment::Fixed { series } => series[t - 1],
        BondRepayment::PollutionLinked {
            base,
            step_up,
            threshold,
        } => {
            if pollution > *threshold {
                base + step_up
            } else {
                *base
            }
        }
    }
}

/// `exp(-sum(fines) / scale)`.
pub fn reputation(fines: &[f64], scale: f64) -> f64 {
    let total = fines.iter().fold(0.0, |acc, f| acc + f);
    (-total / scale).exp()
}

/// River cleanliness term of the E-score. The default is `2 * sigmoid(-p)`,
/// which is 1 for a clean river; `strict` gives the plain `sigmoid(-p)`.
pub fn cleanliness(pollution: f64, strict: bool) -> f64 {
    let s = 1.0 / (1.0 + pollution.exp());
    if strict {
        s
    } else {
        2.0 * s
    }
}

pub fn water_e_score(pollution: f64, chemical: f64, nbs: f64, strict: bool) -> Result<f64, WaterError> {
    for (name, v) in [("pollution", pollution), ("chemical cost", chemical), ("nbs cost", nbs)] {
        if !(v >= 0.0) {
            return Err(WaterError::InvalidInput(format!(
                "{name} must be non-negative, got {v}"
            )));
        }
    }
    let spend = chemical + nbs;
    let fraction = if spend > 0.0 {
        nbs / spend
    } else if pollution > 0.0 {
        // polluted river with nothing spent on mitigation
        0.0
    } else {
        1.0
    };
    Ok(fraction * cleanliness(pollution, strict))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub strict_paper_sigmoid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub pollution: f64,
    pub chemical_cost: f64,
    pub fine: f64,
    pub nbs_cost: f64,
    pub repayment: f64,
    pub income: f64,
    pub other_expenses: f64,
    pub balance: f64,
    pub reputation: f64,
    pub e_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial_balance: f64,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Sum of end-of-step balances.
    pub fn objective(&self) -> f64 {
        self.steps.iter().map(|s| s.balance).sum()
    }

    /// First 1-based step with a negative balance.
    pub fn first_insolvent_step(&self) -> Option<usize> {
        self.steps.iter().find(|s| s.balance < 0.0).map(|s| s.t)
    }

    pub fn min_balance(&self) -> f64 {
        self.steps.iter().map(|s| s.balance).fold(f64::INFINITY, f64::min)
    }

    pub fn final_balance(&self) -> f64 {
        self.steps.last().map_or(self.initial_balance, |s| s.balance)
    }

    pub fn final_reputation(&self) -> f64 {
        self.steps.last().map_or(1.0, |s| s.reputation)
    }
}

fn check_run(catchment: &Catchment, plan: &[usize], horizon: usize) -> Result<(), WaterError> {
    if plan.len() != catchment.fields.len() {
        return Err(WaterError::Config(format!(
            "plan covers {} fields, catchment has {}",
            plan.len(),
            catchment.fields.len()
        )));
    }
    for (f, &o) in plan.iter().enumerate() {
        let field = &catchment.fields[f];
        if o >= catchment.options.len() || !field.candidate_options.contains(&catchment.options[o].id) {
            return Err(WaterError::Config(format!(
                "plan assigns a non-candidate option to field `{}`",
                field.id
            )));
        }
    }
    let fin = &catchment.finance;
    let mut series: Vec<(&'static str, usize)> = vec![
        ("rainfall", catchment.rainfall.values.len()),
        ("income_per_interval", fin.income_per_interval.len()),
        ("other_expenses", fin.other_expenses.len()),
    ];
    if let BondRepayment::Fixed { series: s } = &fin.bond_repayment {
        series.push(("bond_repayment", s.len()));
    }
    for (name, len) in series {
        if len < horizon {
            return Err(WaterError::SeriesLength {
                series: name,
                needed: horizon,
                found: len,
            });
        }
    }
    Ok(())
}

/// Runs the full per-step pipeline with the default parametric runoff.
pub fn simulate(
    catchment: &Catchment,
    plan: &[usize],
    horizon: usize,
    opts: SimOptions,
) -> Result<Trajectory, WaterError> {
    let runoff = ParametricRunoff {
        rain_exponent: catchment.rain_exponent,
    };
    simulate_with(catchment, plan, horizon, &runoff, opts)
}

pub fn simulate_with(
    catchment: &Catchment,
    plan: &[usize],
    horizon: usize,
    runoff: &dyn RunoffModel,
    opts: SimOptions,
) -> Result<Trajectory, WaterError> {
    check_run(catchment, plan, horizon)?;
    let fin = &catchment.finance;
    let scale = fin.effective_reputation_scale();
    let nbs = nbs_cost(catchment, plan);
    let mut steps = Vec::with_capacity(horizon);
    let mut balance = fin.initial_balance;
    let mut previous = None;
    let mut fines = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let pollution = catchment_pollution(catchment, plan, t, runoff);
        let chem = chemical_cost(fin, pollution);
        let f = fine(fin, previous);
        let rep = repayment(fin, t, pollution);
        let income = fin.income_per_interval[t - 1];
        let other = fin.other_expenses[t - 1];
        balance = balance + income - nbs - chem - rep - f - other;
        fines.push(f);
        steps.push(StepRecord {
            t,
            pollution,
            chemical_cost: chem,
            fine: f,
            nbs_cost: nbs,
            repayment: rep,
            income,
            other_expenses: other,
            balance,
            reputation: reputation(&fines, scale),
            e_score: water_e_score(pollution, chem, nbs, opts.strict_paper_sigmoid)?,
        });
        previous = Some((pollution, balance));
    }
    Ok(Trajectory {
        initial_balance: fin.initial_balance,
        steps,
    })
}

/// `B_0, B_1, ..., B_horizon`.
pub fn balance_trajectory(catchment: &Catchment, plan: &[usize], horizon: usize) -> Result<Vec<f64>, WaterError> {
    let tr = simulate(catchment, plan, horizon, SimOptions::default())?;
    Ok(std::iter::once(tr.initial_balance)
        .chain(tr.steps.iter().map(|s| s.balance))
        .collect())
}
