//! Double adaptive stochastic gradient methods.
//!
//! This crate holds the allocation-only numerical core: convex objectives with
//! analytic gradients, a segment tree for adaptive categorical sampling, the
//! general stochastic gradient stepping engine with its seven instantiations
//! (SGD, ap-SGD, ADAGrad, RMSProp, Adam, AMSGrad and DASGrad), and the
//! expected-regret instrumentation used to compare them.
//!
//! It builds under `#![no_std]` with `alloc`; file formats, experiment
//! orchestration and the command line live in the `dasgrad-harness` crate.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod metrics;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod vector;

pub use error::{Error, Result};
pub use metrics::{AggregateTrace, ReferenceSolution, RegretLedger};
pub use optimizers::{
    BoxBounds, Method, MomentState, Optimizer, OptimizerConfig, ScoreMode, StepRecord, WeightMode,
};
pub use problems::{Example, Features, Problem, ProblemKind};
pub use rng::Rng;
pub use sampling::{SamplingDistribution, SamplingTree};
pub use vector::{DenseVector, SparseVector};
