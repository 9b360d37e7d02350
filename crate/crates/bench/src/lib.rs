//! Studies, outputs and acceptance checks for the `heatinv` solvers.

// NaN must fail the validity checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod output;
pub mod study;
pub mod svg;
