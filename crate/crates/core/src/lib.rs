//! Neural probabilistic amplitude shaping for nonlinear fiber channels.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod matchers;
pub mod metrics;
pub mod neural;
pub mod trainer;
pub mod ssfm;

pub use error::{Error, Result};
