use serde::{Deserialize, Serialize};

use super::{BeefError, Farm, FarmStateModel, SupplyChainGraph};
use crate::inference::{marginalize, DiscreteModel, Evidence, FactorTable, InferenceError};

pub const VAR_A: &str = "A";
pub const VAR_FD: &str = "F_D";
pub const VAR_F: &str = "F";
pub const VAR_S: &str = "S";
pub const VAR_L: &str = "L";
pub const VAR_N: &str = "N";
pub const VAR_C: &str = "C";
/// Farm still in the supply chain (used by embargo projections).
pub(crate) const VAR_ALIVE: &str = "Alive";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Forest,
    Nrp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Abattoir,
    Farm,
}

/// CAR-veracity mixture of the two conditional state distributions.
pub fn farm_state_distribution(farm: &Farm) -> Vec<f64> {
    let p = farm.car_assessment.p_car_true;
    farm.state_given_car_true
        .iter()
        .zip(&farm.state_given_car_false)
        .map(|(t, f)| p * t + (1.0 - p) * f)
        .collect()
}

/// Total probability mass of the supplier's abattoir row. One for any
/// validated graph; below one after a divestment without renormalization.
pub fn sourcing_mass(graph: &SupplyChainGraph, supplier: &str) -> Result<f64, BeefError> {
    if !graph.has_supplier(supplier) {
        return Err(BeefError::UnknownSupplier(supplier.to_string()));
    }
    Ok(graph
        .sourcing_b_to_a
        .get(supplier)
        .map_or(0.0, |row| row.values().sum()))
}

fn config(e: InferenceError) -> BeefError {
    match e {
        InferenceError::InvalidFactor(msg) => BeefError::Config(msg),
        other => BeefError::Inference(other),
    }
}

/// Compiles the supplier's chain into factors
/// `p(A) p(F_D|A) p(F|F_D) p(S|F) p(L|S) p(N|S) p(C|S)`.
///
/// A sub-normalized supplier row is rescaled to a distribution here; callers
/// that need raw sums multiply by [`sourcing_mass`].
pub fn compile_chain(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
) -> Result<DiscreteModel, BeefError> {
    compile_with_survival(graph, states, supplier, None)
}

pub(crate) fn compile_with_survival(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
    alive_given_state: Option<&[f64]>,
) -> Result<DiscreteModel, BeefError> {
    let mass = sourcing_mass(graph, supplier)?;
    if !(mass > 0.0) {
        return Err(BeefError::Config(format!("supplier `{supplier}` has no sourcing mass")));
    }
    let n_a = graph.abattoirs.len();
    let n_f = graph.farms.len();
    let n_s = states.n_states();

    let mut p_a = vec![0.0; n_a];
    for (id, p) in &graph.sourcing_b_to_a[supplier] {
        let i = graph
            .abattoir_index(id)
            .ok_or_else(|| BeefError::Config(format!("unknown abattoir `{id}`")))?;
        p_a[i] = p / mass;
    }

    let mut fd_rows = Vec::with_capacity(n_a);
    for a in &graph.abattoirs {
        let mut row = vec![0.0; n_f];
        let src = graph
            .sourcing_a_to_f
            .get(a)
            .ok_or_else(|| BeefError::Config(format!("abattoir `{a}` has no sourcing row")))?;
        for (id, p) in src {
            let j = graph
                .farm_index(id)
                .ok_or_else(|| BeefError::Config(format!("unknown farm `{id}`")))?;
            row[j] = *p;
        }
        fd_rows.push(row);
    }

    let mut f_rows = Vec::with_capacity(n_f);
    for (d, farm) in graph.farms.iter().enumerate() {
        let mut row = vec![0.0; n_f];
        row[d] = farm.self_origination().max(0.0);
        for s in &farm.laundering_sources {
            let j = graph
                .farm_index(&s.source)
                .ok_or_else(|| BeefError::Config(format!("unknown farm `{}`", s.source)))?;
            row[j] += s.probability;
        }
        f_rows.push(row);
    }

    let s_rows: Vec<Vec<f64>> = graph.farms.iter().map(farm_state_distribution).collect();
    let l_rows: Vec<Vec<f64>> = states
        .p_compliance_given_state
        .iter()
        .map(|&p| vec![1.0 - p, p])
        .collect();

    let mut factors = vec![
        FactorTable::prior(VAR_A, p_a),
        FactorTable::conditional(VAR_FD, n_f, &[(VAR_A, n_a)], &fd_rows),
        FactorTable::conditional(VAR_F, n_f, &[(VAR_FD, n_f)], &f_rows),
        FactorTable::conditional(VAR_S, n_s, &[(VAR_F, n_f)], &s_rows),
        FactorTable::conditional(VAR_L, 2, &[(VAR_S, n_s)], &l_rows),
        FactorTable::conditional(VAR_N, states.nrp_bins.len(), &[(VAR_S, n_s)], &states.nrp_given_state),
        FactorTable::conditional(
            VAR_C,
            states.cattle_levels.len(),
            &[(VAR_S, n_s)],
            &states.cattle_given_state,
        ),
    ];
    if let Some(alive) = alive_given_state {
        let rows: Vec<Vec<f64>> = alive.iter().map(|&a| vec![1.0 - a, a]).collect();
        factors.push(FactorTable::conditional(VAR_ALIVE, 2, &[(VAR_S, n_s)], &rows));
    }
    let factors = factors.into_iter().collect::<Result<Vec<_>, _>>().map_err(config)?;
    let model = DiscreteModel::new(factors).map_err(config)?;
    Ok(model.with_declared(&[VAR_L, VAR_N, VAR_C], &[VAR_A, VAR_F])?)
}

fn query(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
    var: &str,
) -> Result<Option<(f64, Vec<f64>)>, BeefError> {
    let mass = sourcing_mass(graph, supplier)?;
    if !(mass > 0.0) {
        return Ok(None);
    }
    let model = compile_chain(graph, states, supplier)?;
    let m = marginalize(&model, &[var], &Evidence::new())?;
    Ok(Some((mass, m.values().to_vec())))
}

/// `p(L = 1 | B, D)`. Unsourced mass contributes nothing.
pub fn compliance_probability(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
) -> Result<f64, BeefError> {
    Ok(query(graph, states, supplier, VAR_L)?.map_or(0.0, |(mass, p)| mass * p[1]))
}

/// `p(N | B, D)` over the state model's NRP bins.
pub fn nrp_distribution(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
) -> Result<Vec<f64>, BeefError> {
    Ok(match query(graph, states, supplier, VAR_N)? {
        Some((mass, p)) => p.into_iter().map(|x| mass * x).collect(),
        None => vec![0.0; states.nrp_bins.len()],
    })
}

/// `K` times the expected head of cattle reaching the supplier.
pub fn expected_return(graph: &SupplyChainGraph, states: &FarmStateModel, supplier: &str) -> Result<f64, BeefError> {
    let Some((mass, p)) = query(graph, states, supplier, VAR_C)? else {
        return Ok(0.0);
    };
    let head: f64 = states.cattle_levels.iter().zip(&p).map(|(&c, &q)| c as f64 * q).sum();
    Ok(graph.return_per_head * mass * head)
}

pub fn e_score_forest(graph: &SupplyChainGraph, states: &FarmStateModel, supplier: &str) -> Result<f64, BeefError> {
    compliance_probability(graph, states, supplier)
}

/// Bin-weighted mean NRP impact score.
pub fn e_score_nrp(graph: &SupplyChainGraph, states: &FarmStateModel, supplier: &str) -> Result<f64, BeefError> {
    let p = nrp_distribution(graph, states, supplier)?;
    Ok(bin_mean(&states.nrp_bins, &p))
}

fn bin_mean(bins: &[f64], p: &[f64]) -> f64 {
    bins.iter().zip(p).map(|(b, q)| b * q).sum()
}

/// E-score of an abattoir or origin farm, conditioned on that actor being in
/// the supplier's chain.
pub fn actor_e_score(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
    actor: &str,
    kind: ScoreKind,
) -> Result<f64, BeefError> {
    let (var, idx) = if let Some(i) = graph.abattoir_index(actor) {
        (VAR_A, i)
    } else if let Some(i) = graph.farm_index(actor) {
        (VAR_F, i)
    } else {
        return Err(BeefError::UnknownActor(actor.to_string()));
    };
    let model = compile_chain(graph, states, supplier)?;
    let evidence = Evidence::from([(var.to_string(), idx)]);
    Ok(match kind {
        ScoreKind::Forest => marginalize(&model, &[VAR_L], &evidence)?.values()[1],
        ScoreKind::Nrp => bin_mean(&states.nrp_bins, marginalize(&model, &[VAR_N], &evidence)?.values()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplierScores {
    pub supplier: String,
    pub e_score_forest: f64,
    pub e_score_nrp: f64,
    pub expected_return: f64,
    pub nrp_distribution: Vec<f64>,
}

pub fn score_supplier(
    graph: &SupplyChainGraph,
    states: &FarmStateModel,
    supplier: &str,
) -> Result<SupplierScores, BeefError> {
    let nrp = nrp_distribution(graph, states, supplier)?;
    Ok(SupplierScores {
        supplier: supplier.to_string(),
        e_score_forest: e_score_forest(graph, states, supplier)?,
        e_score_nrp: bin_mean(&states.nrp_bins, &nrp),
        expected_return: expected_return(graph, states, supplier)?,
        nrp_distribution: nrp,
    })
}
