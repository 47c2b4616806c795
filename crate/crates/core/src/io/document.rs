use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::beef::{FarmStateModel, SupplyChainGraph};
use crate::controversy::{Lexicon, ReportCorpus};
use crate::scenario::ScenarioSpec;
use crate::validation::{ptr, Violation};
use crate::water::{Catchment, ParameterPriors};

pub const FORMAT_VERSION: &str = "naturerisk/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyChainDoc {
    pub graph: SupplyChainGraph,
    pub farm_states: FarmStateModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatchmentDoc {
    pub catchment: Catchment,
    #[serde(default, skip_serializing_if = "is_default_priors")]
    pub priors: ParameterPriors,
    /// Field id to option id; unlisted fields take their `none` option.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub plan: BTreeMap<String, String>,
}

fn is_default_priors(p: &ParameterPriors) -> bool {
    *p == ParameterPriors::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub scenario: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportsDoc {
    pub corpus: ReportCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconDoc {
    pub lexicon: Lexicon,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    SupplyChain(SupplyChainDoc),
    Catchment(CatchmentDoc),
    Scenario(ScenarioDoc),
    Reports(ReportsDoc),
    Lexicon(LexiconDoc),
}

impl Document {
    pub fn type_name(&self) -> &'static str {
        match self {
            Document::SupplyChain(_) => "supply_chain",
            Document::Catchment(_) => "catchment",
            Document::Scenario(_) => "scenario",
            Document::Reports(_) => "reports",
            Document::Lexicon(_) => "lexicon",
        }
    }

    /// Invariant checks that need only this document.
    pub fn validate(&self) -> Vec<Violation> {
        match self {
            Document::SupplyChain(d) => {
                let mut v = d.farm_states.validate("/farm_states");
                if v.is_empty() {
                    v.extend(d.graph.validate(&d.farm_states, "/graph"));
                }
                v
            }
            Document::Catchment(d) => {
                let mut v = d.catchment.validate("/catchment");
                v.extend(d.priors.validate(Some(&d.catchment), "/priors"));
                for (f, o) in &d.plan {
                    let at = ptr("/plan", f);
                    match d.catchment.fields.iter().find(|x| &x.id == f) {
                        None => v.push(Violation::new("E_DANGLING_ID", at, format!("unknown field `{f}`"))),
                        Some(field) if !field.candidate_options.contains(o) => v.push(Violation::new(
                            "E_DANGLING_ID",
                            at,
                            format!("`{o}` is not a candidate of field `{f}`"),
                        )),
                        Some(_) => {}
                    }
                }
                v
            }
            Document::Scenario(d) => d.scenario.validate(None, None, "/scenario"),
            Document::Reports(d) => d.corpus.validate("/corpus"),
            Document::Lexicon(d) => d.lexicon.validate("/lexicon"),
        }
    }

    pub fn to_value(&self) -> Value {
        let body = match self {
            Document::SupplyChain(d) => serde_json::to_value(d),
            Document::Catchment(d) => serde_json::to_value(d),
            Document::Scenario(d) => serde_json::to_value(d),
            Document::Reports(d) => serde_json::to_value(d),
            Document::Lexicon(d) => serde_json::to_value(d),
        }
        .expect("document types serialize to JSON");
        let mut map = Map::new();
        map.insert("version".into(), Value::from(FORMAT_VERSION));
        map.insert("type".into(), Value::from(self.type_name()));
        if let Value::Object(body) = body {
            map.extend(body);
        }
        Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadStage {
    Parse,
    Schema,
    Invariant,
}

impl LoadStage {
    pub fn exit_code(self) -> u8 {
        match self {
            LoadStage::Parse => 2,
            LoadStage::Schema => 3,
            LoadStage::Invariant => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadError {
    pub stage: LoadStage,
    pub violations: Vec<Violation>,
}

impl LoadError {
    fn one(stage: LoadStage, code: &'static str, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        LoadError {
            stage,
            violations: vec![Violation::new(code, pointer, message)],
        }
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out = ptr(&out, index),
            Segment::Map { key } => out = ptr(&out, key),
            Segment::Enum { variant } => out = ptr(&out, variant),
            Segment::Unknown => {}
        }
    }
    out
}

fn typed<T: for<'de> Deserialize<'de>>(body: Value) -> Result<T, LoadError> {
    serde_path_to_error::deserialize(body).map_err(|e| {
        let pointer = pointer_of(e.path());
        LoadError::one(LoadStage::Schema, "E_SCHEMA", pointer, e.into_inner().to_string())
    })
}

/// Parses and checks one document. Nothing is returned unless every check
/// passes.
pub fn parse_document(text: &str) -> Result<Document, LoadError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| LoadError::one(LoadStage::Parse, "E_PARSE", "", e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(LoadError::one(
            LoadStage::Schema,
            "E_SCHEMA",
            "",
            "document must be a JSON object",
        ));
    };
    match map.remove("version") {
        Some(Value::String(v)) if v == FORMAT_VERSION => {}
        Some(other) => {
            return Err(LoadError::one(
                LoadStage::Schema,
                "E_VERSION",
                "/version",
                format!("expected \"{FORMAT_VERSION}\", found {other}"),
            ))
        }
        None => {
            return Err(LoadError::one(
                LoadStage::Schema,
                "E_VERSION",
                "/version",
                "missing version",
            ))
        }
    }
    let kind = match map.remove("type") {
        Some(Value::String(t)) => t,
        _ => {
            return Err(LoadError::one(
                LoadStage::Schema,
                "E_TYPE",
                "/type",
                "missing document type",
            ))
        }
    };
    let body = Value::Object(map);
    let doc = match kind.as_str() {
        "supply_chain" => Document::SupplyChain(typed(body)?),
        "catchment" => Document::Catchment(typed(body)?),
        "scenario" => Document::Scenario(typed(body)?),
        "reports" => Document::Reports(typed(body)?),
        "lexicon" => Document::Lexicon(typed(body)?),
        other => {
            return Err(LoadError::one(
                LoadStage::Schema,
                "E_TYPE",
                "/type",
                format!("unknown document type `{other}`"),
            ))
        }
    };
    let violations = doc.validate();
    if violations.is_empty() {
        Ok(doc)
    } else {
        Err(LoadError {
            stage: LoadStage::Invariant,
            violations,
        })
    }
}

pub fn load_and_validate(path: &Path) -> Result<Document, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::one(LoadStage::Parse, "E_IO", "", format!("{}: {e}", path.display())))?;
    parse_document(&text)
}
