// Negated float comparisons are deliberate throughout: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod error;
pub mod eval;
pub mod features;
pub mod optimizer;
pub mod power;
pub mod prob_model;
pub mod signal;
pub mod stochastic;

pub use error::{Error, Result};
