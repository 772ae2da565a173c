//! Quantile-frequency analysis of time series.

// Guards of the form `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod garch;
pub mod metrics;
pub mod montecarlo;
pub mod qfa;
pub mod qreg;
pub mod rng;
pub mod series;
pub mod special;

pub use error::{Error, Result};
