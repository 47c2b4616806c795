//! Versioned JSON documents, loading with located diagnostics, and the
//! command runner behind the binary.

mod document;
mod run;

pub use document::{
    load_and_validate, parse_document, CatchmentDoc, Document, LexiconDoc, LoadError, LoadStage, ReportsDoc,
    ScenarioDoc, SupplyChainDoc, FORMAT_VERSION,
};
pub use run::{exit, run, Command, RunConfig, RunOutcome, ORACLE_TOL};
