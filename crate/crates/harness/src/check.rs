//! Self-verification suite behind the `check` subcommand.

use dasgrad_core::optimizers::run;
use dasgrad_core::sampling::{expected_weighted_second_moment, importance_weight, normalize_scores};
use dasgrad_core::{
    DenseVector, Example, Method, OptimizerConfig, Problem, ProblemKind, Rng, SamplingDistribution, SamplingTree,
    SparseVector,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn gaussian_vec(rng: &mut Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.gaussian()).collect()
}

/// Small random problem of the given kind; about half the logistic
/// instances use sparse features.
pub fn random_problem(kind: ProblemKind, rng: &mut Rng) -> Problem {
    let n = 3 + rng.index(8);
    let d = 1 + rng.index(6);
    let k = match kind {
        ProblemKind::Centroid => 1,
        ProblemKind::BinaryLogistic => 2,
        ProblemKind::MulticlassLogistic => 2 + rng.index(4),
    };
    let lambda = if kind == ProblemKind::Centroid { 0.0 } else { 0.1 * rng.uniform() };
    let sparse = kind != ProblemKind::Centroid && rng.bernoulli(0.5);
    let examples = (0..n)
        .map(|i| {
            let values = gaussian_vec(rng, d, 2.0);
            let label = if kind == ProblemKind::Centroid { 0 } else { (i + rng.index(k)) % k };
            if sparse {
                let masked: Vec<f64> = values.iter().map(|v| if rng.bernoulli(0.3) { 0.0 } else { *v }).collect();
                Example::sparse(SparseVector::from_dense(&masked), label)
            } else {
                Example::dense(values, label)
            }
        })
        .collect();
    Problem::new(kind, examples, lambda, k).expect("random problem is well formed")
}

/// Analytic gradients against central differences.
pub fn gradients(instances: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for kind in [ProblemKind::Centroid, ProblemKind::BinaryLogistic, ProblemKind::MulticlassLogistic] {
        for _ in 0..instances {
            let p = random_problem(kind, &mut rng);
            let theta: DenseVector = gaussian_vec(&mut rng, p.param_dim(), 1.0).into();
            match p.finite_difference_check(&theta, 1e-5) {
                Ok(err) => worst = worst.max(err),
                Err(e) => return result("gradients", false, e.to_string()),
            }
        }
    }
    result("gradients", worst < 1e-5, format!("worst relative error {worst:.3e}"))
}

/// Empirical draw frequencies of the segment tree against its weights, and
/// internal sums after interleaved updates.
pub fn sampler(n: usize, draws: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::new(seed);
    let weights: Vec<f64> = (0..n).map(|_| rng.uniform() + 1e-3).collect();
    let Ok(mut tree) = SamplingTree::build(&weights) else {
        return result("sampler", false, "build failed".into());
    };
    let total: f64 = weights.iter().sum();
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        match tree.sample(&mut rng) {
            Ok(i) => counts[i] += 1,
            Err(e) => return result("sampler", false, e.to_string()),
        }
    }
    let mut worst_z: f64 = 0.0;
    for (c, w) in counts.iter().zip(&weights) {
        let p = w / total;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        worst_z = worst_z.max((*c as f64 / draws as f64 - p).abs() / sd);
    }
    for _ in 0..1000 {
        let i = rng.index(n);
        if tree.update(i, rng.uniform() * 10.0).is_err() {
            return result("sampler", false, "update failed".into());
        }
    }
    let nodes = tree.nodes();
    let mut worst_rel: f64 = 0.0;
    for v in 1..tree.capacity() {
        let sum = nodes[2 * v] + nodes[2 * v + 1];
        worst_rel = worst_rel.max((nodes[v] - sum).abs() / sum.abs().max(f64::MIN_POSITIVE));
    }
    result(
        "sampler",
        worst_z < 5.0 && worst_rel < 1e-9,
        format!("worst frequency z-score {worst_z:.2}, worst node relative error {worst_rel:.2e}"),
    )
}

/// `Σ p_i ŵ_i g_i = (1/n) Σ g_i` for random distributions.
pub fn unbiasedness(trials: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = 1 + rng.index(50);
        let scores: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let Ok(p) = normalize_scores(&scores, 1e-3) else {
            return result("unbiasedness", false, "normalization failed".into());
        };
        let g: Vec<f64> = gaussian_vec(&mut rng, n, 1.0);
        let mut weighted = 0.0;
        for (i, gi) in g.iter().enumerate() {
            let Ok(w) = importance_weight(p.prob(i), n) else {
                return result("unbiasedness", false, "weight failed".into());
            };
            weighted += p.prob(i) * w * gi;
        }
        let mean = g.iter().sum::<f64>() / n as f64;
        worst = worst.max((weighted - mean).abs());
    }
    result("unbiasedness", worst < 1e-12, format!("worst absolute error {worst:.2e}"))
}

/// At `p ∝ s` the weighted second moment equals `mean(s)²`, which is its
/// value at uniform sampling minus the variance of `s`.
pub fn optimal_sampling(trials: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = 2 + rng.index(49);
        let s: Vec<f64> = (0..n).map(|_| rng.uniform() * 5.0 + 1e-3).collect();
        let total: f64 = s.iter().sum();
        let evaluated = SamplingDistribution::new(s.iter().map(|v| v / total).collect())
            .and_then(|p| expected_weighted_second_moment(&p, &s, n))
            .and_then(|opt| Ok((opt, expected_weighted_second_moment(&SamplingDistribution::uniform(n), &s, n)?)));
        let Ok((at_opt, at_uni)) = evaluated else {
            return result("optimal-sampling", false, "evaluation failed".into());
        };
        let mean = total / n as f64;
        let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        worst = worst.max((at_opt - mean * mean).abs() / (mean * mean));
        worst = worst.max((at_opt - (at_uni - var)).abs() / at_uni);
    }
    result("optimal-sampling", worst < 1e-10, format!("worst relative error {worst:.2e}"))
}

/// DASGrad with frozen uniform probabilities follows AMSGrad exactly.
pub fn collapse(steps: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::new(seed);
    let p = random_problem(ProblemKind::MulticlassLogistic, &mut rng);
    let frozen = OptimizerConfig::new(Method::Dasgrad).with_batch_size(4).frozen();
    let ams = OptimizerConfig::new(Method::Amsgrad).with_batch_size(4);
    match (run(&p, &frozen, steps, seed, 1), run(&p, &ams, steps, seed, 1)) {
        (Ok(a), Ok(b)) => {
            let worst = a
                .snapshots
                .iter()
                .zip(&b.snapshots)
                .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max);
            result("collapse", worst <= 1e-12, format!("worst coordinate gap {worst:.2e}"))
        }
        (Err(e), _) | (_, Err(e)) => result("collapse", false, e.to_string()),
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        gradients(20, 1),
        sampler(200, 200_000, 2),
        unbiasedness(100, 3),
        optimal_sampling(50, 4),
        collapse(200, 5),
    ]
}
