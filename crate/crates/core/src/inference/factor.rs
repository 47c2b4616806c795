use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::InferenceError;

/// Tolerance used when checking that a conditional table is normalized.
pub const CONDITIONAL_SUM_TOL: f64 = 1e-9;

/// How the values of a [`FactorTable`] should be read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// `p(child | other variables)`; sums to one over the child for every
    /// assignment of the remaining variables.
    Conditional { child: String },
    /// Any non-negative potential, e.g. a normalized marginal.
    Potential,
}

/// A non-negative table over a grid of named discrete variables.
///
/// Values are stored row-major: the last variable varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTable {
    variables: Vec<String>,
    cardinalities: Vec<usize>,
    values: Vec<f64>,
    kind: FactorKind,
}

impl FactorTable {
    pub fn new(
        variables: Vec<String>,
        cardinalities: Vec<usize>,
        values: Vec<f64>,
        kind: FactorKind,
    ) -> Result<Self, InferenceError> {
        if variables.len() != cardinalities.len() {
            return Err(InferenceError::InvalidFactor(format!(
                "{} variables but {} cardinalities",
                variables.len(),
                cardinalities.len()
            )));
        }
        for (i, v) in variables.iter().enumerate() {
            if variables[..i].contains(v) {
                return Err(InferenceError::InvalidFactor(format!("variable `{v}` appears twice")));
            }
        }
        if let Some(i) = cardinalities.iter().position(|&c| c == 0) {
            return Err(InferenceError::InvalidFactor(format!(
                "variable `{}` has cardinality 0",
                variables[i]
            )));
        }
        let size: usize = cardinalities.iter().product();
        if values.len() != size {
            return Err(InferenceError::InvalidFactor(format!(
                "expected {size} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(InferenceError::InvalidFactor(format!(
                "value #{i} ({}) is negative or non-finite",
                values[i]
            )));
        }
        let table = FactorTable {
            variables,
            cardinalities,
            values,
            kind,
        };
        if let FactorKind::Conditional { child } = &table.kind {
            table.check_conditional(child)?;
        }
        Ok(table)
    }

    /// Conditional table `p(child | parents)`. `rows` holds one distribution
    /// over the child per parent assignment, parents enumerated row-major.
    pub fn conditional(
        child: &str,
        child_card: usize,
        parents: &[(&str, usize)],
        rows: &[Vec<f64>],
    ) -> Result<Self, InferenceError> {
        let mut variables: Vec<String> = parents.iter().map(|(n, _)| n.to_string()).collect();
        let mut cardinalities: Vec<usize> = parents.iter().map(|(_, c)| *c).collect();
        let expected_rows: usize = cardinalities.iter().product();
        if rows.len() != expected_rows {
            return Err(InferenceError::InvalidFactor(format!(
                "p({child} | ..) needs {expected_rows} rows, got {}",
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != child_card) {
            return Err(InferenceError::InvalidFactor(format!(
                "p({child} | ..) row of length {} for child cardinality {child_card}",
                r.len()
            )));
        }
        variables.push(child.to_string());
        cardinalities.push(child_card);
        let values = rows.concat();
        FactorTable::new(
            variables,
            cardinalities,
            values,
            FactorKind::Conditional {
                child: child.to_string(),
            },
        )
    }

    /// Parentless conditional, i.e. a prior `p(var)`.
    pub fn prior(var: &str, probs: Vec<f64>) -> Result<Self, InferenceError> {
        let card = probs.len();
        FactorTable::conditional(var, card, &[], &[probs])
    }

    fn check_conditional(&self, child: &str) -> Result<(), InferenceError> {
        let pos = self
            .variables
            .iter()
            .position(|v| v == child)
            .ok_or_else(|| InferenceError::InvalidFactor(format!("child `{child}` is not a factor variable")))?;
        let strides = self.strides();
        let child_card = self.cardinalities[pos];
        let child_stride = strides[pos];
        for idx in 0..self.values.len() {
            // visit each parent assignment once: the cell where the child is 0
            if !(idx / child_stride).is_multiple_of(child_card) {
                continue;
            }
            let sum: f64 = (0..child_card).map(|k| self.values[idx + k * child_stride]).sum();
            if (sum - 1.0).abs() > CONDITIONAL_SUM_TOL {
                return Err(InferenceError::InvalidFactor(format!(
                    "p({child} | ..) sums to {sum} at cell {idx}"
                )));
            }
        }
        Ok(())
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> &FactorKind {
        &self.kind
    }

    /// The child variable of a conditional, `None` for potentials.
    pub fn child(&self) -> Option<&str> {
        match &self.kind {
            FactorKind::Conditional { child } => Some(child),
            FactorKind::Potential => None,
        }
    }

    /// Row-major strides, one per variable.
    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.cardinalities)
    }

    /// Value at a full assignment given in `variables()` order.
    pub fn value(&self, assignment: &[usize]) -> f64 {
        debug_assert_eq!(assignment.len(), self.variables.len());
        let idx = assignment.iter().zip(self.strides()).map(|(a, s)| a * s).sum::<usize>();
        self.values[idx]
    }

    /// Deterministic text form for golden tests: 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let kind = match &self.kind {
            FactorKind::Conditional { child } => format!("conditional({child})"),
            FactorKind::Potential => "potential".to_string(),
        };
        let _ = writeln!(out, "kind: {kind}");
        let _ = writeln!(out, "variables: {}", self.variables.join(" "));
        let cards: Vec<String> = self.cardinalities.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "cardinalities: {}", cards.join(" "));
        let _ = writeln!(out, "values:");
        for v in &self.values {
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }
}

pub(crate) fn row_major_strides(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * cards[i + 1];
    }
    strides
}
