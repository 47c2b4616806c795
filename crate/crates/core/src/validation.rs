use std::fmt;

use serde::Serialize;

/// One broken invariant, located by a JSON pointer into the input document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub pointer: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: &'static str, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.pointer, self.message)
    }
}

/// Appends an escaped reference token to a JSON pointer.
pub fn ptr(base: &str, token: impl fmt::Display) -> String {
    let token = token.to_string().replace('~', "~0").replace('/', "~1");
    format!("{base}/{token}")
}

pub(crate) const SUM_TOL: f64 = 1e-9;

/// Checks that `values` is a probability vector, pushing violations under `at`.
pub(crate) fn check_distribution(out: &mut Vec<Violation>, at: &str, values: &[f64], expected_len: Option<usize>) {
    if let Some(n) = expected_len {
        if values.len() != n {
            out.push(Violation::new(
                "E_LENGTH",
                at,
                format!("expected {n} entries, found {}", values.len()),
            ));
            return;
        }
    }
    if values.is_empty() {
        out.push(Violation::new("E_LENGTH", at, "distribution is empty"));
        return;
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 || *v > 1.0 {
            out.push(Violation::new(
                "E_PROBABILITY",
                ptr(at, i),
                format!("{v} is not a probability"),
            ));
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        out.push(Violation::new(
            "E_SUM",
            at,
            format!("distribution sums to {sum}, expected 1"),
        ));
    }
}

pub(crate) fn check_unit_interval(out: &mut Vec<Violation>, at: &str, v: f64) {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        out.push(Violation::new("E_RANGE", at, format!("{v} is outside [0, 1]")));
    }
}
