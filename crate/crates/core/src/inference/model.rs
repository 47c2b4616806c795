use std::collections::{BTreeMap, HashMap};

use super::{FactorTable, InferenceError};

/// Query variable indices and observed `(variable, state)` pairs.
pub(crate) type Resolved = (Vec<usize>, Vec<(usize, usize)>);

/// Partial assignment: variable name to state index.
pub type Evidence = BTreeMap<String, usize>;

/// A bag of factors over a registry of named discrete variables.
///
/// Registry order is the order of first appearance across the factor list;
/// it is used for deterministic tie-breaking during elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    factors: Vec<FactorTable>,
    names: Vec<String>,
    cards: Vec<usize>,
    index: HashMap<String, usize>,
    declared_query: Vec<String>,
    declared_evidence: Vec<String>,
}

impl DiscreteModel {
    pub fn new(factors: Vec<FactorTable>) -> Result<Self, InferenceError> {
        let mut names = Vec::new();
        let mut cards = Vec::new();
        let mut index = HashMap::new();
        for f in &factors {
            for (name, &card) in f.variables().iter().zip(f.cardinalities()) {
                match index.get(name) {
                    Some(&i) if cards[i] != card => {
                        return Err(InferenceError::CardinalityMismatch {
                            variable: name.clone(),
                            expected: cards[i],
                            found: card,
                        })
                    }
                    Some(_) => {}
                    None => {
                        index.insert(name.clone(), names.len());
                        names.push(name.clone());
                        cards.push(card);
                    }
                }
            }
        }
        let model = DiscreteModel {
            factors,
            names,
            cards,
            index,
            declared_query: Vec::new(),
            declared_evidence: Vec::new(),
        };
        model.check_acyclic()?;
        Ok(model)
    }

    /// Records which variables callers are expected to query or clamp.
    /// Purely descriptive; `marginalize` accepts any registered variable.
    pub fn with_declared(mut self, query: &[&str], evidence: &[&str]) -> Result<Self, InferenceError> {
        for v in query.iter().chain(evidence) {
            self.lookup(v)?;
        }
        self.declared_query = query.iter().map(|s| s.to_string()).collect();
        self.declared_evidence = evidence.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    fn check_acyclic(&self) -> Result<(), InferenceError> {
        // edges parent -> child from every conditional factor
        let n = self.names.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for f in &self.factors {
            let Some(child) = f.child() else { continue };
            let c = self.index[child];
            for v in f.variables() {
                if v != child {
                    let p = self.index[v];
                    children[p].push(c);
                    indegree[c] += 1;
                }
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    stack.push(c);
                }
            }
        }
        if seen != n {
            let stuck: Vec<&str> = (0..n)
                .filter(|&i| indegree[i] > 0)
                .map(|i| self.names[i].as_str())
                .collect();
            return Err(InferenceError::Cyclic(stuck.join(", ")));
        }
        Ok(())
    }

    pub fn factors(&self) -> &[FactorTable] {
        &self.factors
    }

    /// Registered variable names in registry order.
    pub fn variables(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn declared_query(&self) -> &[String] {
        &self.declared_query
    }

    pub fn declared_evidence(&self) -> &[String] {
        &self.declared_evidence
    }

    pub fn cardinality(&self, name: &str) -> Option<usize> {
        self.index.get(name).map(|&i| self.cards[i])
    }

    pub(crate) fn lookup(&self, name: &str) -> Result<usize, InferenceError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| InferenceError::UnknownVariable(name.to_string()))
    }

    /// Resolves query names and evidence to registry indices, checking ranges.
    pub(crate) fn resolve(&self, query: &[&str], evidence: &Evidence) -> Result<Resolved, InferenceError> {
        if query.is_empty() {
            return Err(InferenceError::InvalidArgument("empty query".into()));
        }
        let mut q = Vec::with_capacity(query.len());
        for name in query {
            let i = self.lookup(name)?;
            if q.contains(&i) {
                return Err(InferenceError::InvalidArgument(format!(
                    "variable `{name}` queried twice"
                )));
            }
            q.push(i);
        }
        let mut ev = Vec::with_capacity(evidence.len());
        for (name, &value) in evidence {
            let i = self.lookup(name)?;
            if value >= self.cards[i] {
                return Err(InferenceError::EvidenceOutOfRange {
                    variable: name.clone(),
                    value,
                    cardinality: self.cards[i],
                });
            }
            ev.push((i, value));
        }
        Ok((q, ev))
    }
}

pub(crate) fn describe_evidence(evidence: &Evidence) -> String {
    if evidence.is_empty() {
        return "{}".to_string();
    }
    let parts: Vec<String> = evidence.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}
