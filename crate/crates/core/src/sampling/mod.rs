//! Adaptive categorical sampling over training indices.
//!
//! Scores are turned into a distribution by adding a smoothing constant to
//! every score before normalising, so every index keeps positive mass and the
//! probabilities sum to one without a second pass. Samples are drawn from a
//! [`SamplingTree`] holding the probabilities in its leaves, and each draw is
//! reweighted by an importance weight so the weighted gradient stays unbiased
//! for the target mean.

mod tree;

use alloc::vec::Vec;

pub use tree::SamplingTree;

use crate::error::{Error, Result};
use crate::optimizers::MomentState;
use crate::problems::Problem;
use crate::vector::DenseVector;

/// A strictly positive probability vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    probs: Vec<f64>,
}

impl SamplingDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least one entry"));
        }
        if probs.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("probabilities must be positive and finite"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("probabilities must sum to one"));
        }
        Ok(Self { probs })
    }

    /// Every entry is exactly `1.0 / n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty set");
        Self { probs: alloc::vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }
}

/// `p_i = (s_i + ε) / Σ_j (s_j + ε)`.
pub fn normalize_scores(scores: &[f64], epsilon: f64) -> Result<SamplingDistribution> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to normalize"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument("smoothing epsilon must be positive"));
    }
    if scores.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite and nonnegative"));
    }
    let total: f64 = scores.iter().map(|s| s + epsilon).sum();
    let probs = scores.iter().map(|s| (s + epsilon) / total).collect();
    Ok(SamplingDistribution { probs })
}

/// `(1/n) / p_i`: the weight that unbiases a draw toward the uniform mean.
pub fn importance_weight(p_i: f64, n: usize) -> Result<f64> {
    if !(p_i > 0.0) {
        return Err(Error::InvalidArgument("sampling probability must be positive"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be positive"));
    }
    Ok((1.0 / n as f64) / p_i)
}

/// `(|L_i| / m) / p_i`, with `|L_i|` the count of example `i`'s label in a
/// target set of `m` examples.
pub fn target_weight(p_i: f64, label_count: usize, m: usize) -> Result<f64> {
    if !(p_i > 0.0) {
        return Err(Error::InvalidArgument("sampling probability must be positive"));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("target set must be nonempty"));
    }
    if label_count > m {
        return Err(Error::InvalidArgument("label count exceeds target size"));
    }
    Ok((label_count as f64 / m as f64) / p_i)
}

/// Per-example gradient norms `||∇f_i(θ)||₂`, one full pass.
pub fn scores_apsgd(problem: &Problem, theta: &DenseVector) -> Result<Vec<f64>> {
    theta.check_dim(problem.param_dim())?;
    let mut grad = DenseVector::zeros(problem.param_dim());
    (0..problem.len())
        .map(|i| {
            grad.as_mut_slice().fill(0.0);
            problem.add_example_gradient(i, theta, 1.0, &mut grad)?;
            Ok(grad.norm())
        })
        .collect()
}

/// Per-example norms of the preconditioned candidate direction
/// `||V̂^{-1/4} (β₁ₜ m_prev + (1 - β₁ₜ) ∇f_i(θ))||₂`, all against the shared
/// moment state. A coordinate with `v̂_h = 0` is divided by `sqrt(ε_div)`,
/// the quarter power of the step's squared zero-moment denominator.
pub fn scores_dasgrad(
    problem: &Problem,
    theta: &DenseVector,
    moments: &MomentState,
    beta1_t: f64,
    epsilon_div: f64,
) -> Result<Vec<f64>> {
    let dim = problem.param_dim();
    theta.check_dim(dim)?;
    moments.m.check_dim(dim)?;
    moments.v_hat.check_dim(dim)?;
    if !(0.0..1.0).contains(&beta1_t) {
        return Err(Error::InvalidArgument("beta1_t must lie in [0, 1)"));
    }
    let inv_quarter: Vec<f64> = moments
        .v_hat
        .iter()
        .map(|&v| if v > 0.0 { 1.0 / libm::sqrt(libm::sqrt(v)) } else { 1.0 / libm::sqrt(epsilon_div) })
        .collect();
    let carried: Vec<f64> = moments.m.iter().map(|m| beta1_t * m).collect();
    let mut grad = DenseVector::zeros(dim);
    (0..problem.len())
        .map(|i| {
            grad.as_mut_slice().fill(0.0);
            problem.add_example_gradient(i, theta, 1.0, &mut grad)?;
            let sq: f64 = grad
                .iter()
                .zip(&carried)
                .zip(&inv_quarter)
                .map(|((g, c), s)| {
                    let dir = (c + (1.0 - beta1_t) * g) * s;
                    dir * dir
                })
                .sum();
            Ok(libm::sqrt(sq))
        })
        .collect()
}

/// `Σ_i norms_i² / (n² p_i)`, the second moment of the importance-weighted
/// estimator. Minimised over the simplex by `p ∝ norms`, where it equals
/// `((1/n) Σ norms_i)²`.
pub fn expected_weighted_second_moment(
    probs: &SamplingDistribution,
    norms: &[f64],
    n: usize,
) -> Result<f64> {
    if probs.len() != norms.len() {
        return Err(Error::DimensionMismatch { expected: probs.len(), got: norms.len() });
    }
    if n != norms.len() {
        return Err(Error::DimensionMismatch { expected: norms.len(), got: n });
    }
    let n2 = (n * n) as f64;
    Ok(norms.iter().zip(probs.probs()).map(|(s, p)| s * s / (n2 * p)).sum())
}
