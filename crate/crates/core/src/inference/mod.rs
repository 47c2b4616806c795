//! Discrete factor tables, exact marginalization, a brute-force oracle and a
//! Metropolis sampler shared by the supply-chain and water models.

mod eliminate;
mod enumerate;
mod factor;
mod mcmc;
mod model;

use thiserror::Error;

pub use eliminate::marginalize;
pub use enumerate::{enumerate_joint, enumerate_joint_capped, DEFAULT_STATE_CAP};
pub use factor::{FactorKind, FactorTable, CONDITIONAL_SUM_TOL};
pub use mcmc::{mh_sample, MhConfig, SampleBatch, ACCEPTANCE_BAND};
pub use model::{DiscreteModel, Evidence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{variable}` has cardinality {found}, registered as {expected}")]
    CardinalityMismatch {
        variable: String,
        expected: usize,
        found: usize,
    },
    #[error("evidence {variable}={value} outside cardinality {cardinality}")]
    EvidenceOutOfRange {
        variable: String,
        value: usize,
        cardinality: usize,
    },
    #[error("conditional structure has a cycle through: {0}")]
    Cyclic(String),
    #[error("evidence {evidence} has probability zero")]
    ImpossibleEvidence { evidence: String },
    #[error("joint state space {size} exceeds enumeration cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error("log-density at the initial point is {0}")]
    NonFiniteInit(f64),
    #[error("{0}")]
    InvalidArgument(String),
}
