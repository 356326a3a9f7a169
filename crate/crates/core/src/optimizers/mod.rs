//! The general stochastic gradient method and its instantiations.
//!
//! Every method follows the same step: sample a minibatch from the current
//! distribution, form an importance-weighted preconditioned direction, take a
//! step of size `α/√t`, and project back onto a box. The methods differ only
//! in how the direction, the preconditioner and the distribution are built:
//!
//! | method    | direction            | preconditioner            | sampling   |
//! |-----------|----------------------|---------------------------|------------|
//! | `sgd`     | `g`                  | identity                  | uniform    |
//! | `ap_sgd`  | `g`                  | identity                  | `∝ ‖g_i‖`  |
//! | `adagrad` | `g`                  | `sqrt(Σg²/t)`             | uniform    |
//! | `rmsprop` | `g`                  | `sqrt(v)`                 | uniform    |
//! | `adam`    | `m`                  | `sqrt(v)`                 | uniform    |
//! | `amsgrad` | `m`                  | `sqrt(max v)`             | uniform    |
//! | `dasgrad` | `m`                  | `sqrt(max v)`             | `∝ ‖V̂^{-1/4} m_i‖` |
//!
//! No bias correction is applied to `m` or `v`; the raw recursion is used as
//! written, which differs from most Adam implementations.

mod engine;
mod moments;

use alloc::vec::Vec;

pub use engine::{refresh_probabilities, run, run_with, step_general, Optimizer, RunTrace, Step, StepRecord};
pub use moments::{adagrad_update, moment_update, MomentState};

use crate::error::{Error, Result};
use crate::vector::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sgd,
    ApSgd,
    Adagrad,
    Rmsprop,
    Adam,
    Amsgrad,
    Dasgrad,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Sgd,
        Method::ApSgd,
        Method::Adagrad,
        Method::Rmsprop,
        Method::Adam,
        Method::Amsgrad,
        Method::Dasgrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::ApSgd => "ap_sgd",
            Method::Adagrad => "adagrad",
            Method::Rmsprop => "rmsprop",
            Method::Adam => "adam",
            Method::Amsgrad => "amsgrad",
            Method::Dasgrad => "dasgrad",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name || (name == "ap-sgd" && *m == Method::ApSgd))
    }

    /// Whether the sampling distribution is recomputed during the run.
    pub fn adapts_probabilities(self) -> bool {
        matches!(self, Method::ApSgd | Method::Dasgrad)
    }

    /// Whether the update uses the exponential moment recursion.
    pub fn uses_moments(self) -> bool {
        matches!(self, Method::Rmsprop | Method::Adam | Method::Amsgrad | Method::Dasgrad)
    }

    pub fn uses_max_correction(self) -> bool {
        matches!(self, Method::Amsgrad | Method::Dasgrad)
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// How a sampled example is reweighted.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    /// `(1/n)/p_i`: unbiased for the training mean.
    Training,
    /// Unbiased for a target label mixture: `label_counts[c]` examples of
    /// class `c` among `m` target examples. A draw of class `c` gets
    /// `target_weight(p_i, label_counts[c], m) / n_c` with `n_c` the training
    /// count of class `c`.
    Target { label_counts: Vec<usize>, m: usize },
}

/// What the DASGrad refresh scores per example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// `‖V̂^{-1/4} ∇f_i‖`.
    Gradient,
    /// `‖V̂^{-1/4} (β₁ₜ m + (1-β₁ₜ) ∇f_i)‖`.
    Momentum,
}

/// Axis-aligned feasible set.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxBounds {
    Uniform { lo: f64, hi: f64 },
    PerCoordinate { lo: DenseVector, hi: DenseVector },
}

impl Default for BoxBounds {
    fn default() -> Self {
        BoxBounds::Uniform { lo: -1e6, hi: 1e6 }
    }
}

impl BoxBounds {
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        match self {
            BoxBounds::Uniform { lo, hi } => {
                if lo > hi || lo.is_nan() || hi.is_nan() {
                    return Err(Error::InvalidArgument("box lower bound exceeds upper bound"));
                }
            }
            BoxBounds::PerCoordinate { lo, hi } => {
                hi.check_dim(lo.len())?;
                if let Some(d) = dim {
                    lo.check_dim(d)?;
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidArgument("box lower bound exceeds upper bound"));
                }
            }
        }
        Ok(())
    }

    pub fn project_in_place(&self, theta: &mut DenseVector) {
        match self {
            BoxBounds::Uniform { lo, hi } => {
                for v in theta.as_mut_slice() {
                    *v = v.clamp(*lo, *hi);
                }
            }
            BoxBounds::PerCoordinate { lo, hi } => {
                for ((v, l), h) in theta.as_mut_slice().iter_mut().zip(lo.iter()).zip(hi.iter()) {
                    *v = v.clamp(*l, *h);
                }
            }
        }
    }
}

/// Hyperparameters of one optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_div: f64,
    pub epsilon_prob: f64,
    pub refresh_period: usize,
    pub batch_size: usize,
    pub projection: BoxBounds,
    pub weight_mode: WeightMode,
    pub score_mode: ScoreMode,
    /// When set, `β₁ₜ = β₁ λ^{t-1}`; otherwise `β₁ₜ = β₁`.
    pub beta1_decay: Option<f64>,
    /// Never refresh: the distribution stays uniform.
    pub freeze_probabilities: bool,
    /// `θ₁`; zeros when absent.
    pub initial_theta: Option<DenseVector>,
}

impl OptimizerConfig {
    /// Logistic-regression presets: `α = 0.01`, `β₁ = 0.9`, `β₂ = 0.99`,
    /// batch 32, refresh every 10 steps.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alpha: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            epsilon_div: 1e-8,
            epsilon_prob: 1e-8,
            refresh_period: 10,
            batch_size: 32,
            projection: BoxBounds::default(),
            weight_mode: WeightMode::Training,
            score_mode: ScoreMode::Momentum,
            beta1_decay: None,
            freeze_probabilities: false,
            initial_theta: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_refresh_period(mut self, period: usize) -> Self {
        self.refresh_period = period;
        self
    }

    pub fn with_weight_mode(mut self, mode: WeightMode) -> Self {
        self.weight_mode = mode;
        self
    }

    pub fn with_projection(mut self, projection: BoxBounds) -> Self {
        self.projection = projection;
        self
    }

    pub fn frozen(mut self) -> Self {
        self.freeze_probabilities = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument("alpha must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("beta1 and beta2 must lie in [0, 1)"));
        }
        if matches!(self.method, Method::Adam | Method::Amsgrad | Method::Dasgrad)
            && self.beta1 > 0.0
            && !(self.beta1 < libm::sqrt(self.beta2))
        {
            return Err(Error::InvalidArgument("beta1 / sqrt(beta2) must be below 1"));
        }
        if !(self.epsilon_div > 0.0) || !(self.epsilon_prob > 0.0) {
            return Err(Error::InvalidArgument("epsilons must be positive"));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidArgument("refresh period must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1"));
        }
        if let Some(decay) = self.beta1_decay {
            if !(0.0..=1.0).contains(&decay) {
                return Err(Error::InvalidArgument("beta1 decay must lie in [0, 1]"));
            }
        }
        if let WeightMode::Target { m, label_counts } = &self.weight_mode {
            if *m == 0 || label_counts.iter().sum::<usize>() != *m {
                return Err(Error::InvalidArgument("target label counts must sum to m > 0"));
            }
        }
        self.projection.validate(self.initial_theta.as_ref().map(DenseVector::len))
    }

    /// `β₁ₜ` for step `t ≥ 1`. RMSProp and the first-order methods carry no
    /// momentum.
    pub fn beta1_at(&self, t: usize) -> f64 {
        match self.method {
            Method::Adam | Method::Amsgrad | Method::Dasgrad => match self.beta1_decay {
                Some(decay) => self.beta1 * libm::pow(decay, t.saturating_sub(1) as f64),
                None => self.beta1,
            },
            _ => 0.0,
        }
    }

    /// Whether a refresh happens before sampling at step `t`.
    pub fn refreshes_at(&self, t: usize) -> bool {
        if self.freeze_probabilities {
            return false;
        }
        match self.method {
            Method::Dasgrad => t.is_multiple_of(self.refresh_period),
            Method::ApSgd => t == 1 || t.is_multiple_of(self.refresh_period),
            _ => false,
        }
    }
}

/// `α_t = α / √t`.
pub fn step_size(alpha: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidArgument("step index starts at 1"));
    }
    Ok(alpha / libm::sqrt(t as f64))
}

/// Coordinatewise clamp into `[lo, hi]`.
///
/// For an axis-aligned box the projection in any positive diagonal metric
/// separates per coordinate, so this single clamp is the weighted projection
/// for every preconditioner.
pub fn project_box(theta: &DenseVector, lo: &DenseVector, hi: &DenseVector) -> Result<DenseVector> {
    lo.check_dim(theta.len())?;
    hi.check_dim(theta.len())?;
    let bounds = BoxBounds::PerCoordinate { lo: lo.clone(), hi: hi.clone() };
    bounds.validate(Some(theta.len()))?;
    let mut out = theta.clone();
    bounds.project_in_place(&mut out);
    Ok(out)
}
