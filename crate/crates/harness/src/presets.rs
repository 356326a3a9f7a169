//! Shipped experiment configurations.
//!
//! All presets use `β₁ = 0.9`, `β₂ = 0.99`, minibatches of 32 and a
//! probability refresh every 10 steps. The logistic presets use the MNIST
//! and IMDB learning rates; the centroid sweep uses `α = 0.003`.

use std::collections::BTreeSet;
use std::path::Path;

use dasgrad_core::{Method, OptimizerConfig, ProblemKind};

use crate::config::{DataSource, ExperimentConfig, NamedOptimizer, ProblemSpec, TestSource, Unbalance, Weighting};
use crate::experiment::SweepConfig;

pub const NAMES: [&str; 4] = ["dense-logistic", "sparse-logistic", "centroid-sweep", "matching"];

pub const CENTROID_ALPHA: f64 = 0.003;

fn named(name: &str, method: Method, alpha: f64) -> NamedOptimizer {
    NamedOptimizer { name: name.into(), config: OptimizerConfig::new(method).with_alpha(alpha), weighting: Weighting::Training }
}

fn experiment(problem: ProblemSpec, optimizers: Vec<NamedOptimizer>, steps: usize, seeds: u64, tick: usize, output: &Path) -> ExperimentConfig {
    ExperimentConfig {
        problem,
        optimizers,
        steps,
        seeds: (0..seeds).collect(),
        metric_tick: tick,
        output: output.to_path_buf(),
        reference: None,
        solver_tol: 1e-8,
        solver_max_iters: 20_000,
    }
}

/// Desk-scale stand-in for the MNIST run: 10-class logistic regression on
/// a Gaussian mixture, Adam, AMSGrad and DASGrad at `α = 0.01`.
pub fn dense_logistic(output: &Path, seeds: u64) -> ExperimentConfig {
    let problem = ProblemSpec {
        kind: ProblemKind::MulticlassLogistic,
        source: DataSource::SynthClassification { n: 2000, d: 100, k: 10, margin: 4.0, sparsity: 0.0 },
        lambda: 1e-3,
        intercept: false,
        unbalance: None,
        test: TestSource::None,
        data_seed: None,
    };
    let opts = vec![
        named("adam", Method::Adam, 0.01),
        named("amsgrad", Method::Amsgrad, 0.01),
        named("dasgrad", Method::Dasgrad, 0.01),
    ];
    experiment(problem, opts, 2000, seeds, 100, output)
}

/// Desk-scale stand-in for the IMDB run: binary logistic regression on
/// sparse features with the per-method learning rates of that setting.
pub fn sparse_logistic(output: &Path, seeds: u64) -> ExperimentConfig {
    let problem = ProblemSpec {
        kind: ProblemKind::BinaryLogistic,
        source: DataSource::SynthClassification { n: 2000, d: 1000, k: 2, margin: 4.0, sparsity: 0.95 },
        lambda: 1e-3,
        intercept: true,
        unbalance: None,
        test: TestSource::None,
        data_seed: None,
    };
    let opts = vec![
        named("adam", Method::Adam, 0.005),
        named("amsgrad", Method::Amsgrad, 0.006),
        named("dasgrad", Method::Dasgrad, 0.02),
    ];
    experiment(problem, opts, 2000, seeds, 100, output)
}

/// Online centroid learning at one spread `σ`: AMSGrad against DASGrad,
/// metrics at every step.
pub fn centroid(sigma: f64, output: &Path, seeds: u64) -> ExperimentConfig {
    let problem = ProblemSpec {
        kind: ProblemKind::Centroid,
        source: DataSource::SynthCentroid { n: 200, d: 10, sigma },
        lambda: 0.0,
        intercept: false,
        unbalance: None,
        test: TestSource::None,
        data_seed: None,
    };
    let opts = vec![named("amsgrad", Method::Amsgrad, CENTROID_ALPHA), named("dasgrad", Method::Dasgrad, CENTROID_ALPHA)];
    experiment(problem, opts, 500, seeds, 1, output)
}

pub fn centroid_sweep(sigmas: &[f64], output: &Path, seeds: u64) -> SweepConfig {
    SweepConfig { sigmas: sigmas.to_vec(), base: centroid(1.0, output, seeds) }
}

/// Distribution matching: four classes with ninety percent of classes 1
/// and 3 removed from training, a balanced test set, and DASGrad with and
/// without target reweighting.
pub fn matching(output: &Path, seeds: u64) -> ExperimentConfig {
    let problem = ProblemSpec {
        kind: ProblemKind::MulticlassLogistic,
        source: DataSource::SynthClassification { n: 2000, d: 20, k: 4, margin: 2.0, sparsity: 0.0 },
        lambda: 1e-3,
        intercept: true,
        unbalance: Some(Unbalance { labels: BTreeSet::from([1, 3]), keep_fraction: 0.1 }),
        test: TestSource::Synth { n: 2000 },
        data_seed: None,
    };
    let mut target = named("dasgrad-target", Method::Dasgrad, 0.01);
    target.weighting = Weighting::Target;
    let opts = vec![named("dasgrad", Method::Dasgrad, 0.01), target];
    let mut config = experiment(problem, opts, 2000, seeds, 100, output);
    config.reference = Some("dasgrad-target".into());
    config
}

/// Looks a preset up by name with its default seed count.
pub fn by_name(name: &str, output: &Path) -> Option<ExperimentConfig> {
    match name {
        "dense-logistic" => Some(dense_logistic(output, 10)),
        "sparse-logistic" => Some(sparse_logistic(output, 10)),
        "centroid-sweep" => Some(centroid(1.0, output, 100)),
        "matching" => Some(matching(output, 20)),
        _ => None,
    }
}
