//! Folding controversy-report sentiment into the compliance posterior.
//!
//! Each report is reduced to its most probable sentiment class `s`, and the
//! compliance belief is updated as `p(L | R) ∝ p(s | L) p(L)`. Several reports
//! are treated as conditionally independent given `L`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validation::{check_distribution, ptr, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControversyError {
    #[error("report `{0}` has neither text nor a sentiment class")]
    Unclassifiable(String),
    #[error("unknown sentiment class `{class}` on report `{report}`")]
    UnknownClass { report: String, class: String },
    #[error("reports contradict the prior: both compliance hypotheses have zero likelihood")]
    ContradictoryEvidence,
    #[error("prior {0} is outside [0, 1]")]
    InvalidPrior(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub id: String,
    /// Supplier the report is about.
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_class: Option<String>,
}

/// `p(s | L)` for `L = 1` (compliant) and `L = 0` (transgression).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentimentLikelihood {
    pub classes: Vec<String>,
    pub given_compliant: Vec<f64>,
    pub given_noncompliant: Vec<f64>,
}

impl SentimentLikelihood {
    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.classes.is_empty() {
            out.push(Violation::new("E_EMPTY", ptr(at, "classes"), "no sentiment classes"));
        }
        let n = Some(self.classes.len());
        check_distribution(&mut out, &ptr(at, "given_compliant"), &self.given_compliant, n);
        check_distribution(&mut out, &ptr(at, "given_noncompliant"), &self.given_noncompliant, n);
        out
    }

    pub fn index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }
}

/// Anything that can assign a sentiment class to a report.
pub trait SentimentClassifier {
    /// Most probable class and its confidence.
    fn classify(&self, report: &Report) -> Result<(String, f64), ControversyError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    pub class: String,
    pub weight: f64,
}

/// Bag-of-words scorer: sums per-class weights of known words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    /// Class order; earlier classes win ties.
    pub classes: Vec<String>,
    pub words: BTreeMap<String, LexiconEntry>,
}

impl Lexicon {
    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.classes.is_empty() {
            out.push(Violation::new("E_EMPTY", ptr(at, "classes"), "no sentiment classes"));
        }
        for (word, e) in &self.words {
            let wat = ptr(&ptr(at, "words"), word);
            if !self.classes.contains(&e.class) {
                out.push(Violation::new(
                    "E_DANGLING_ID",
                    ptr(&wat, "class"),
                    format!("unknown class `{}`", e.class),
                ));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                out.push(Violation::new(
                    "E_RANGE",
                    ptr(&wat, "weight"),
                    format!("weight {} must be non-negative", e.weight),
                ));
            }
        }
        out
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

impl SentimentClassifier for Lexicon {
    fn classify(&self, report: &Report) -> Result<(String, f64), ControversyError> {
        if let Some(c) = &report.sentiment_class {
            return Ok((c.clone(), 1.0));
        }
        let text = report.text.as_deref().unwrap_or("").trim();
        if text.is_empty() || self.classes.is_empty() {
            return Err(ControversyError::Unclassifiable(report.id.clone()));
        }
        let mut scores = vec![0.0; self.classes.len()];
        for tok in tokens(text) {
            if let Some(e) = self.words.get(&tok) {
                if let Some(i) = self.classes.iter().position(|c| *c == e.class) {
                    scores[i] += e.weight;
                }
            }
        }
        let total: f64 = scores.iter().sum();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        let confidence = if total > 0.0 {
            scores[best] / total
        } else {
            1.0 / self.classes.len() as f64
        };
        Ok((self.classes[best].clone(), confidence))
    }
}

/// Posterior `p(L = 1 | B, D, R)` after all `reports`.
///
/// Class counts are tallied first so the result does not depend on report
/// order.
pub fn bayes_update_compliance(
    prior: f64,
    reports: &[Report],
    classifier: &dyn SentimentClassifier,
    likelihood: &SentimentLikelihood,
) -> Result<f64, ControversyError> {
    if !(0.0..=1.0).contains(&prior) {
        return Err(ControversyError::InvalidPrior(prior));
    }
    let mut counts = vec![0i32; likelihood.classes.len()];
    for r in reports {
        let (class, _) = classifier.classify(r)?;
        let i = likelihood.index(&class).ok_or_else(|| ControversyError::UnknownClass {
            report: r.id.clone(),
            class,
        })?;
        counts[i] += 1;
    }
    let informative = counts.iter().enumerate().any(|(i, &n)| {
        let (yes, no) = (likelihood.given_compliant[i], likelihood.given_noncompliant[i]);
        n > 0 && (yes != no || yes == 0.0)
    });
    if !informative {
        return Ok(prior);
    }
    let mut compliant = prior;
    let mut violating = 1.0 - prior;
    for (i, &n) in counts.iter().enumerate() {
        if n > 0 {
            compliant *= likelihood.given_compliant[i].powi(n);
            violating *= likelihood.given_noncompliant[i].powi(n);
        }
    }
    let z = compliant + violating;
    if !(z > 0.0) {
        return Err(ControversyError::ContradictoryEvidence);
    }
    Ok(compliant / z)
}

/// A report corpus together with the likelihood used to fold it in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportCorpus {
    pub likelihood: SentimentLikelihood,
    pub reports: Vec<Report>,
}

impl ReportCorpus {
    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut out = self.likelihood.validate(&ptr(at, "likelihood"));
        for (i, r) in self.reports.iter().enumerate() {
            let rat = ptr(&ptr(at, "reports"), i);
            let has_text = r.text.as_deref().is_some_and(|t| !t.trim().is_empty());
            if !has_text && r.sentiment_class.is_none() {
                out.push(Violation::new(
                    "E_MISSING",
                    rat.clone(),
                    format!("report `{}` needs text or a sentiment class", r.id),
                ));
            }
            if let Some(c) = &r.sentiment_class {
                if self.likelihood.index(c).is_none() {
                    out.push(Violation::new(
                        "E_DANGLING_ID",
                        ptr(&rat, "sentiment_class"),
                        format!("unknown class `{c}`"),
                    ));
                }
            }
        }
        out
    }

    pub fn for_subject<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a Report> + 'a {
        self.reports.iter().filter(move |r| r.subject == subject)
    }
}
