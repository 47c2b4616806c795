//! Brute-force joint enumeration. Slow on purpose: it walks every joint
//! assignment and shares nothing with the elimination path except factor
//! lookups, so the two can check each other.

use super::model::describe_evidence;
use super::{DiscreteModel, Evidence, FactorKind, FactorTable, InferenceError};

/// Default cap on the joint state space, 2^24.
pub const DEFAULT_STATE_CAP: u128 = 1 << 24;

pub fn enumerate_joint(
    model: &DiscreteModel,
    query: &[&str],
    evidence: &Evidence,
) -> Result<FactorTable, InferenceError> {
    enumerate_joint_capped(model, query, evidence, DEFAULT_STATE_CAP)
}

pub fn enumerate_joint_capped(
    model: &DiscreteModel,
    query: &[&str],
    evidence: &Evidence,
    cap: u128,
) -> Result<FactorTable, InferenceError> {
    let (q, ev) = model.resolve(query, evidence)?;
    let cards = model.cardinalities();
    let size = cards
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(InferenceError::StateSpaceTooLarge { size, cap });
    }

    // for each factor, the registry index of each of its variables
    let factor_vars: Vec<Vec<usize>> = model
        .factors()
        .iter()
        .map(|f| f.variables().iter().map(|v| model.lookup(v).unwrap()).collect())
        .collect();

    let q_cards: Vec<usize> = q.iter().map(|&v| cards[v]).collect();
    let mut acc = vec![0.0; q_cards.iter().product()];

    let mut assignment = vec![0usize; cards.len()];
    let mut local = Vec::new();
    'outer: loop {
        if ev.iter().all(|&(v, val)| assignment[v] == val) {
            let mut p = 1.0;
            for (f, vars) in model.factors().iter().zip(&factor_vars) {
                local.clear();
                local.extend(vars.iter().map(|&v| assignment[v]));
                p *= f.value(&local);
            }
            let mut cell = 0;
            for (&v, &c) in q.iter().zip(&q_cards) {
                cell = cell * c + assignment[v];
            }
            acc[cell] += p;
        }
        for d in (0..assignment.len()).rev() {
            assignment[d] += 1;
            if assignment[d] < cards[d] {
                continue 'outer;
            }
            assignment[d] = 0;
        }
        break;
    }

    let z: f64 = acc.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(InferenceError::ImpossibleEvidence {
            evidence: describe_evidence(evidence),
        });
    }
    for v in &mut acc {
        *v /= z;
    }
    FactorTable::new(
        q.iter().map(|&v| model.variables()[v].clone()).collect(),
        q_cards,
        acc,
        FactorKind::Potential,
    )
}
