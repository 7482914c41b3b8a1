//! Sequential multiple testing of several data streams with step-down and
//! step-up procedures that control generalized familywise error rates
//! (k-FWER) or the false discovery and false nondiscovery proportions.

// negated comparisons are how parameters reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical_values;
pub mod error;
pub mod fixed_baseline;
pub mod procedures;
pub mod simulation;
pub mod statistics;
pub mod step_values;

pub use error::{Error, Result};
