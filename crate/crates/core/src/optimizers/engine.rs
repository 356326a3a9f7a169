use alloc::vec::Vec;

use super::moments::{adagrad_update, moment_update, MomentState};
use super::{step_size, Method, OptimizerConfig, ScoreMode, WeightMode};
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng::Rng;
use crate::sampling::{
    importance_weight, normalize_scores, scores_apsgd, scores_dasgrad, target_weight,
    SamplingDistribution, SamplingTree,
};
use crate::vector::DenseVector;

/// Result of one call to [`step_general`].
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub theta: DenseVector,
    pub sampled: Vec<usize>,
}

/// One step of the general stochastic gradient method.
///
/// Draws `B` indices i.i.d. from `tree`, forms
/// `u = (1/B) Σ_b ŵ_b m_b / (sqrt(v̂) + ε)` with the per-draw candidate
/// direction `m_b = β₁ₜ m_{t-1} + (1-β₁ₜ) g_b`, and returns
/// `Π(θ - α_t u)`. The moment recursion itself is driven by the unweighted
/// minibatch mean gradient.
#[allow(clippy::too_many_arguments)]
pub fn step_general(
    problem: &Problem,
    theta: &DenseVector,
    state: &mut MomentState,
    probs: &SamplingDistribution,
    tree: &SamplingTree,
    rng: &mut Rng,
    config: &OptimizerConfig,
    t: usize,
) -> Result<Step> {
    let dim = problem.param_dim();
    theta.check_dim(dim)?;
    if state.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: state.dim() });
    }
    if probs.len() != problem.len() || tree.len() != problem.len() {
        return Err(Error::DimensionMismatch { expected: problem.len(), got: probs.len() });
    }
    let alpha_t = step_size(config.alpha, t)?;
    let batch = config.batch_size;
    let train_counts = match &config.weight_mode {
        WeightMode::Target { .. } => Some(problem.label_counts()),
        WeightMode::Training => None,
    };

    let mut sampled = Vec::with_capacity(batch);
    let mut grad_sum = DenseVector::zeros(dim);
    let mut weighted_grad_sum = DenseVector::zeros(dim);
    let mut weight_sum = 0.0;
    let mut grad = DenseVector::zeros(dim);
    for _ in 0..batch {
        let i = tree.sample(rng)?;
        let p_i = probs.prob(i);
        let w = match (&config.weight_mode, &train_counts) {
            (WeightMode::Target { label_counts, m }, Some(train)) => {
                let label = problem.examples()[i].label;
                let count = label_counts.get(label).copied().unwrap_or(0);
                target_weight(p_i, count, *m)? / train[label] as f64
            }
            _ => importance_weight(p_i, problem.len())?,
        };
        grad.as_mut_slice().fill(0.0);
        problem.add_example_gradient(i, theta, 1.0, &mut grad)?;
        grad_sum.axpy(1.0, &grad);
        weighted_grad_sum.axpy(w, &grad);
        weight_sum += w;
        sampled.push(i);
    }
    let inv_b = 1.0 / batch as f64;
    grad_sum.scale(inv_b);
    let mean_grad = grad_sum;

    let mut next = theta.clone();
    match config.method {
        Method::Sgd | Method::ApSgd => {
            next.axpy(-alpha_t * inv_b, &weighted_grad_sum);
        }
        Method::Adagrad => {
            adagrad_update(state, &mean_grad)?;
            let steps = state.t as f64;
            for h in 0..dim {
                let denom = libm::sqrt(state.adagrad_sum[h] / steps) + config.epsilon_div;
                next[h] -= alpha_t * inv_b * weighted_grad_sum[h] / denom;
            }
        }
        Method::Rmsprop | Method::Adam | Method::Amsgrad | Method::Dasgrad => {
            let beta1_t = config.beta1_at(t);
            let carried_weight = beta1_t * weight_sum * inv_b;
            let m_prev = state.m.clone();
            moment_update(
                state,
                &mean_grad,
                beta1_t,
                config.beta2,
                config.method.uses_max_correction(),
            )?;
            for h in 0..dim {
                let direction = carried_weight * m_prev[h]
                    + (1.0 - beta1_t) * inv_b * weighted_grad_sum[h];
                let denom = libm::sqrt(state.v_hat[h]) + config.epsilon_div;
                next[h] -= alpha_t * direction / denom;
            }
        }
    }
    config.projection.project_in_place(&mut next);
    if !next.is_finite() {
        return Err(Error::Divergence { step: t });
    }
    Ok(Step { theta: next, sampled })
}

/// Recomputes the adaptive distribution and writes it into every leaf of the
/// tree. ap-SGD scores by gradient norm, DASGrad by the preconditioned
/// candidate-direction norm. Methods with fixed uniform sampling get the
/// uniform distribution back.
pub fn refresh_probabilities(
    problem: &Problem,
    theta: &DenseVector,
    state: &MomentState,
    config: &OptimizerConfig,
    tree: &mut SamplingTree,
) -> Result<SamplingDistribution> {
    let dist = match config.method {
        Method::ApSgd => normalize_scores(&scores_apsgd(problem, theta)?, config.epsilon_prob)?,
        Method::Dasgrad => {
            let beta1_t = match config.score_mode {
                ScoreMode::Momentum => config.beta1_at(state.t + 1),
                ScoreMode::Gradient => 0.0,
            };
            let scores = scores_dasgrad(problem, theta, state, beta1_t, config.epsilon_div)?;
            normalize_scores(&scores, config.epsilon_prob)?
        }
        _ => SamplingDistribution::uniform(problem.len()),
    };
    tree.assign(dist.probs())?;
    Ok(dist)
}

/// Per-step trace entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub sampled_indices: Vec<usize>,
    /// Full objective after the step, filled on metric ticks.
    pub loss_full: Option<f64>,
    /// Index into [`RunTrace::snapshots`] on metric ticks.
    pub theta_snapshot_id: Option<usize>,
}

/// A stateful run of one optimizer on one problem.
#[derive(Debug, Clone)]
pub struct Optimizer<'a> {
    problem: &'a Problem,
    config: OptimizerConfig,
    theta: DenseVector,
    state: MomentState,
    probs: SamplingDistribution,
    tree: SamplingTree,
    rng: Rng,
    steps: usize,
}

impl<'a> Optimizer<'a> {
    pub fn new(problem: &'a Problem, config: OptimizerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let dim = problem.param_dim();
        let theta = match &config.initial_theta {
            Some(theta) => {
                theta.check_dim(dim)?;
                theta.clone()
            }
            None => DenseVector::zeros(dim),
        };
        config.projection.validate(Some(dim))?;
        if let WeightMode::Target { .. } = config.weight_mode {
            if !problem.kind().is_classification() {
                return Err(Error::InvalidArgument("target weights need a labelled problem"));
            }
        }
        let probs = SamplingDistribution::uniform(problem.len());
        let tree = SamplingTree::build(probs.probs())?;
        Ok(Self {
            problem,
            config,
            theta,
            state: MomentState::new(dim),
            probs,
            tree,
            rng: Rng::new(seed),
            steps: 0,
        })
    }

    pub fn theta(&self) -> &DenseVector {
        &self.theta
    }

    pub fn state(&self) -> &MomentState {
        &self.state
    }

    pub fn distribution(&self) -> &SamplingDistribution {
        &self.probs
    }

    pub fn tree(&self) -> &SamplingTree {
        &self.tree
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Advances one step, refreshing the distribution first when due.
    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.steps + 1;
        if self.config.refreshes_at(t) {
            self.probs =
                refresh_probabilities(self.problem, &self.theta, &self.state, &self.config, &mut self.tree)?;
        }
        let Step { theta, sampled } = step_general(
            self.problem,
            &self.theta,
            &mut self.state,
            &self.probs,
            &self.tree,
            &mut self.rng,
            &self.config,
            t,
        )?;
        self.theta = theta;
        self.steps = t;
        Ok(StepRecord { t, sampled_indices: sampled, loss_full: None, theta_snapshot_id: None })
    }
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    /// `θ` after each metric tick, in tick order.
    pub snapshots: Vec<DenseVector>,
    pub final_theta: DenseVector,
}

/// Runs `steps` iterations from `θ₁`, evaluating the full objective and
/// keeping a parameter snapshot every `metric_tick` steps. Deterministic in
/// `(config, seed)`.
pub fn run(
    problem: &Problem,
    config: &OptimizerConfig,
    steps: usize,
    seed: u64,
    metric_tick: usize,
) -> Result<RunTrace> {
    let mut snapshots = Vec::new();
    let mut records = Vec::with_capacity(steps);
    let final_theta = run_with(problem, config, steps, seed, metric_tick, |record, theta| {
        let mut record = record;
        if record.theta_snapshot_id.is_some() {
            record.loss_full = Some(problem.full_objective(theta)?);
            record.theta_snapshot_id = Some(snapshots.len());
            snapshots.push(theta.clone());
        }
        records.push(record);
        Ok(())
    })?;
    Ok(RunTrace { records, snapshots, final_theta })
}

/// Drives a run and hands every step record to `observer` together with the
/// post-step parameters. Records on metric ticks carry
/// `theta_snapshot_id = Some(_)` as a marker.
pub fn run_with<F>(
    problem: &Problem,
    config: &OptimizerConfig,
    steps: usize,
    seed: u64,
    metric_tick: usize,
    mut observer: F,
) -> Result<DenseVector>
where
    F: FnMut(StepRecord, &DenseVector) -> Result<()>,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("a run needs at least one step"));
    }
    if metric_tick == 0 {
        return Err(Error::InvalidArgument("metric tick must be at least 1"));
    }
    let mut opt = Optimizer::new(problem, config.clone(), seed)?;
    for _ in 0..steps {
        let mut record = opt.step()?;
        if record.t % metric_tick == 0 {
            record.theta_snapshot_id = Some(record.t / metric_tick - 1);
        }
        observer(record, opt.theta())?;
    }
    Ok(opt.theta.clone())
}
