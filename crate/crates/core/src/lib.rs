// Negated float comparisons are used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beef;
pub mod controversy;
pub mod inference;
pub mod io;
pub mod optimizer;
pub mod scenario;
pub mod seed;
pub mod validation;
pub mod water;
