//! Experiment runner for `fairfed-core`: JSON configs, trace files, CSV
//! outputs, canned presets and the acceptance checks behind them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod presets;
pub mod runner;
pub mod summary;
pub mod trace;

pub use error::{FairfedError, Result};
