//! Experiment harness for the double adaptive stochastic gradient family:
//! dataset IO and synthesis, configuration files, parallel seeded runs with
//! CSV traces, shipped presets and a self-check suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod trace;

pub use error::HarnessError;
