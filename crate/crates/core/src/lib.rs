// Negated comparisons like `!(x > 0.0)` deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asgan;
pub mod attention;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod monitor;
pub mod ndcore;

pub use error::{Error, ErrorKind, Result};
