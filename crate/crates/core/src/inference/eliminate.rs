//! Exact marginals by sum-product variable elimination.
//!
//! Evidence is applied by slicing each factor, hidden variables are summed out
//! one at a time in greedy min-degree order (ties go to the earlier registry
//! entry), and the remaining product is normalized over the query.

use std::collections::BTreeSet;

use super::factor::row_major_strides;
use super::model::describe_evidence;
use super::{DiscreteModel, Evidence, FactorKind, FactorTable, InferenceError};

/// Working table over registry indices.
#[derive(Debug, Clone)]
struct Table {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Table {
    fn from_factor(model: &DiscreteModel, f: &FactorTable) -> Self {
        let vars = f
            .variables()
            .iter()
            .map(|v| model.lookup(v).expect("factor variables are registered"))
            .collect();
        Table {
            vars,
            cards: f.cardinalities().to_vec(),
            values: f.values().to_vec(),
        }
    }

    fn scalar(v: f64) -> Self {
        Table {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![v],
        }
    }

    /// Slice at `var = value`, dropping `var` from the scope.
    fn restrict(&self, var: usize, value: usize) -> Table {
        let Some(pos) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let strides = row_major_strides(&self.cards);
        let (stride, card) = (strides[pos], self.cards[pos]);
        let outer = self.values.len() / (stride * card);
        let mut values = Vec::with_capacity(self.values.len() / card);
        for o in 0..outer {
            let base = o * stride * card + value * stride;
            values.extend_from_slice(&self.values[base..base + stride]);
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        Table { vars, cards, values }
    }

    fn product(&self, other: &Table) -> Table {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(&v) {
                vars.push(v);
                cards.push(c);
            }
        }
        // stride of each output variable inside each operand (0 when absent)
        let operand_strides = |t: &Table| -> Vec<usize> {
            let s = row_major_strides(&t.cards);
            vars.iter()
                .map(|v| t.vars.iter().position(|w| w == v).map_or(0, |p| s[p]))
                .collect()
        };
        let sa = operand_strides(self);
        let sb = operand_strides(other);
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut digits = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            // odometer increment, last variable fastest
            for d in (0..digits.len()).rev() {
                digits[d] += 1;
                ia += sa[d];
                ib += sb[d];
                if digits[d] < cards[d] {
                    break;
                }
                ia -= sa[d] * cards[d];
                ib -= sb[d] * cards[d];
                digits[d] = 0;
            }
        }
        Table { vars, cards, values }
    }

    fn sum_out(&self, var: usize) -> Table {
        let pos = self
            .vars
            .iter()
            .position(|&v| v == var)
            .expect("summed variable in scope");
        let strides = row_major_strides(&self.cards);
        let (stride, card) = (strides[pos], self.cards[pos]);
        let outer = self.values.len() / (stride * card);
        let mut values = vec![0.0; outer * stride];
        for o in 0..outer {
            for k in 0..card {
                let base = o * stride * card + k * stride;
                for i in 0..stride {
                    values[o * stride + i] += self.values[base + i];
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        Table { vars, cards, values }
    }

    /// Permutes the scope into `order` (which must be a permutation of it).
    fn reorder(&self, order: &[usize]) -> Table {
        if order == self.vars.as_slice() {
            return self.clone();
        }
        let src_strides = row_major_strides(&self.cards);
        let cards: Vec<usize> = order
            .iter()
            .map(|v| self.cards[self.vars.iter().position(|w| w == v).unwrap()])
            .collect();
        let strides: Vec<usize> = order
            .iter()
            .map(|v| src_strides[self.vars.iter().position(|w| w == v).unwrap()])
            .collect();
        let size = self.values.len();
        let mut values = Vec::with_capacity(size);
        let mut digits = vec![0usize; order.len()];
        let mut src = 0usize;
        for _ in 0..size {
            values.push(self.values[src]);
            for d in (0..digits.len()).rev() {
                digits[d] += 1;
                src += strides[d];
                if digits[d] < cards[d] {
                    break;
                }
                src -= strides[d] * cards[d];
                digits[d] = 0;
            }
        }
        Table {
            vars: order.to_vec(),
            cards,
            values,
        }
    }
}

/// Greedy min-degree choice among `hidden`; ties resolved by registry index.
fn pick_min_degree(tables: &[Table], hidden: &BTreeSet<usize>) -> usize {
    let mut best: Option<(usize, usize)> = None;
    for &v in hidden {
        let mut neighbours = BTreeSet::new();
        for t in tables.iter().filter(|t| t.vars.contains(&v)) {
            neighbours.extend(t.vars.iter().copied().filter(|&w| w != v));
        }
        let degree = neighbours.len();
        if best.is_none_or(|(_, d)| degree < d) {
            best = Some((v, degree));
        }
    }
    best.expect("hidden set is non-empty").0
}

/// Normalized distribution over `query` given `evidence`.
///
/// The result is a potential over the query variables in the order given.
/// Query variables that are also clamped come back as point masses.
pub fn marginalize(model: &DiscreteModel, query: &[&str], evidence: &Evidence) -> Result<FactorTable, InferenceError> {
    let (q, ev) = model.resolve(query, evidence)?;

    let mut tables: Vec<Table> = model
        .factors()
        .iter()
        .map(|f| {
            let mut t = Table::from_factor(model, f);
            for &(var, value) in &ev {
                t = t.restrict(var, value);
            }
            t
        })
        .collect();

    let clamped: BTreeSet<usize> = ev.iter().map(|&(v, _)| v).collect();
    let mut hidden: BTreeSet<usize> = (0..model.variables().len())
        .filter(|v| !q.contains(v) && !clamped.contains(v))
        .collect();

    while !hidden.is_empty() {
        let var = pick_min_degree(&tables, &hidden);
        hidden.remove(&var);
        let (touching, rest): (Vec<Table>, Vec<Table>) = tables.into_iter().partition(|t| t.vars.contains(&var));
        tables = rest;
        let merged = touching.iter().fold(Table::scalar(1.0), |acc, t| acc.product(t));
        tables.push(merged.sum_out(var));
    }

    let joint = tables.iter().fold(Table::scalar(1.0), |acc, t| acc.product(t));
    let free: Vec<usize> = q.iter().copied().filter(|v| !clamped.contains(v)).collect();
    let joint = joint.reorder(&free);

    let z: f64 = joint.values.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(InferenceError::ImpossibleEvidence {
            evidence: describe_evidence(evidence),
        });
    }

    // expand to the full query grid, clamped query variables as point masses
    let cards: Vec<usize> = q.iter().map(|&v| model.cardinalities()[v]).collect();
    let strides = row_major_strides(&cards);
    let size: usize = cards.iter().product();
    let mut values = vec![0.0; size];
    let free_pos: Vec<usize> = free.iter().map(|v| q.iter().position(|w| w == v).unwrap()).collect();
    let mut offset = 0;
    for (i, &var) in q.iter().enumerate() {
        if let Some(&(_, value)) = ev.iter().find(|(v, _)| *v == var) {
            offset += value * strides[i];
        }
    }
    let mut digits = vec![0usize; free.len()];
    for &p in &joint.values {
        let idx = offset
            + digits
                .iter()
                .zip(&free_pos)
                .map(|(d, &pos)| d * strides[pos])
                .sum::<usize>();
        values[idx] = p / z;
        for d in (0..digits.len()).rev() {
            digits[d] += 1;
            if digits[d] < joint.cards[d] {
                break;
            }
            digits[d] = 0;
        }
    }

    FactorTable::new(
        q.iter().map(|&v| model.variables()[v].clone()).collect(),
        cards,
        values,
        FactorKind::Potential,
    )
}
