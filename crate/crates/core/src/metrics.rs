//! Expected-regret instrumentation and run statistics.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problems::{Example, Problem, ProblemKind};
use crate::sampling::scores_apsgd;
use crate::vector::DenseVector;

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Minimiser of the full objective, used as the regret baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub theta_star: DenseVector,
    pub f_star: f64,
    pub grad_norm_at_star: f64,
    pub solver_iterations: usize,
    /// False when `max_iters` ran out before the gradient norm reached `tol`.
    pub converged: bool,
}

/// Solves `min_θ F(θ)`.
///
/// Centroid problems use the closed form `θ* = mean(x)`. Logistic problems
/// use full-batch gradient descent: each iteration tries a Barzilai-Borwein
/// step and halves it until the Armijo condition with constant `1e-4` holds.
/// Iterates decrease monotonically, so the last one is the best. The solve
/// also stops after ten steps that no longer lower `F` measurably; an
/// unconverged solve is flagged rather than rejected.
pub fn solve_reference(problem: &Problem, tol: f64, max_iters: usize) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive"));
    }
    if problem.kind() == ProblemKind::Centroid {
        let mut theta = DenseVector::zeros(problem.param_dim());
        for ex in problem.examples() {
            ex.features.add_scaled_to(1.0, theta.as_mut_slice());
        }
        theta.scale(1.0 / problem.len() as f64);
        let grad_norm = problem.full_gradient(&theta)?.norm();
        return Ok(ReferenceSolution {
            f_star: problem.full_objective(&theta)?,
            theta_star: theta,
            grad_norm_at_star: grad_norm,
            solver_iterations: 0,
            converged: true,
        });
    }
    gradient_descent(problem, DenseVector::zeros(problem.param_dim()), tol, max_iters)
}

fn gradient_descent(
    problem: &Problem,
    start: DenseVector,
    tol: f64,
    max_iters: usize,
) -> Result<ReferenceSolution> {
    const ARMIJO: f64 = 1e-4;
    let mut theta = start;
    let mut f = problem.full_objective(&theta)?;
    let mut grad = problem.full_gradient(&theta)?;
    let mut step = 1.0;
    let mut iters = 0;
    let mut stalled = 0;
    while iters < max_iters && grad.norm() > tol && stalled < 10 {
        iters += 1;
        let g_sq = grad.norm_sq();
        let mut trial_step = step;
        let (next, f_next) = loop {
            let mut cand = theta.clone();
            cand.axpy(-trial_step, &grad);
            let f_cand = problem.full_objective(&cand)?;
            if f_cand <= f - ARMIJO * trial_step * g_sq {
                break (cand, f_cand);
            }
            trial_step *= 0.5;
            if trial_step < 1e-20 {
                // No further decrease is representable.
                let grad_norm = grad.norm();
                return Ok(ReferenceSolution {
                    theta_star: theta,
                    f_star: f,
                    grad_norm_at_star: grad_norm,
                    solver_iterations: iters,
                    converged: grad_norm <= tol,
                });
            }
        };
        let next_grad = problem.full_gradient(&next)?;
        // Barzilai-Borwein estimate for the next trial step.
        let mut s = next.clone();
        s.axpy(-1.0, &theta);
        let mut y = next_grad.clone();
        y.axpy(-1.0, &grad);
        let sy = s.dot(&y);
        step = if sy > 0.0 { (s.norm_sq() / sy).min(1e6) } else { trial_step * 2.0 };
        // Below the rounding floor of F the tolerance may be unreachable.
        if f - f_next <= 1e-15 * f.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        theta = next;
        f = f_next;
        grad = next_grad;
    }
    let grad_norm = grad.norm();
    Ok(ReferenceSolution {
        theta_star: theta,
        f_star: f,
        grad_norm_at_star: grad_norm,
        solver_iterations: iters,
        converged: grad_norm <= tol,
    })
}

/// `F(θ_t) - f*`.
pub fn instantaneous_regret(problem: &Problem, theta_t: &DenseVector, f_star: f64) -> Result<f64> {
    Ok(problem.full_objective(theta_t)? - f_star)
}

/// Population variance over examples of `‖∇f_i(θ)‖₂`.
pub fn gradient_norm_variance(problem: &Problem, theta: &DenseVector) -> Result<f64> {
    let norms = scores_apsgd(problem, theta)?;
    Ok(population_variance(&norms))
}

/// `E[s²] - E[s]²` computed by the two-pass formula. Exactly zero for
/// constant input.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    var
}

/// Predicted class: argmax of the class scores with ties to the lowest
/// index; for binary problems class 1 iff `⟨θ, x⟩ > 0`.
pub fn predict(problem: &Problem, theta: &DenseVector, example: &Example) -> Result<usize> {
    match problem.kind() {
        ProblemKind::Centroid => Err(Error::UnsupportedMetric("prediction needs a classification problem")),
        ProblemKind::BinaryLogistic => {
            Ok(usize::from(example.features.dot(theta.as_slice()) > 0.0))
        }
        ProblemKind::MulticlassLogistic => {
            let scores = problem.class_scores(&example.features, theta.as_slice());
            let mut best = 0;
            for (k, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = k;
                }
            }
            Ok(best)
        }
    }
}

/// Fraction of `eval_set` predicted correctly.
pub fn accuracy(problem: &Problem, theta: &DenseVector, eval_set: &[Example]) -> Result<f64> {
    if !problem.kind().is_classification() {
        return Err(Error::UnsupportedMetric("accuracy needs a classification problem"));
    }
    theta.check_dim(problem.param_dim())?;
    if eval_set.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set"));
    }
    let mut correct = 0usize;
    for ex in eval_set {
        if ex.features.dim() != problem.feature_dim() {
            return Err(Error::DimensionMismatch { expected: problem.feature_dim(), got: ex.features.dim() });
        }
        if predict(problem, theta, ex)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval_set.len() as f64)
}

/// Per-step instantaneous and cumulative regret.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    pub per_step: Vec<(usize, f64, f64)>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: usize, instantaneous: f64) {
        let cumulative = self.cumulative() + instantaneous;
        self.per_step.push((t, instantaneous, cumulative));
    }

    pub fn cumulative(&self) -> f64 {
        self.per_step.last().map_or(0.0, |e| e.2)
    }

    /// Least-squares slope of `cumulative / t` against `t` over the final
    /// half of the entries. Nonpositive for sublinear regret.
    pub fn average_regret_tail_slope(&self) -> f64 {
        let tail = &self.per_step[self.per_step.len() / 2..];
        let points: Vec<(f64, f64)> = tail.iter().map(|(t, _, c)| (*t as f64, c / *t as f64)).collect();
        least_squares_slope(&points)
    }
}

/// Slope of the ordinary least-squares line through `points`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Mean and normal-approximation 95% interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        self.ci_high - self.mean
    }

    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

/// `mean ± 1.96 · s / √n` with the `n-1` sample standard deviation.
pub fn mean_interval(values: &[f64]) -> Result<Interval> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("an interval needs at least two values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = Z_95 * libm::sqrt(var) / libm::sqrt(n);
    Ok(Interval { mean, ci_low: mean - half, ci_high: mean + half, n: values.len() })
}

/// Paired interval of `a_k - b_k`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<Interval> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_interval(&diffs)
}

/// Welch-style interval of `mean(a) - mean(b)` for independent samples.
pub fn unpaired_difference(a: &[f64], b: &[f64]) -> Result<Interval> {
    let ia = mean_interval(a)?;
    let ib = mean_interval(b)?;
    let se_a = ia.half_width() / Z_95;
    let se_b = ib.half_width() / Z_95;
    let mean = ia.mean - ib.mean;
    let half = Z_95 * libm::sqrt(se_a * se_a + se_b * se_b);
    Ok(Interval { mean, ci_low: mean - half, ci_high: mean + half, n: a.len().min(b.len()) })
}

/// Cross-seed mean trace with 95% intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrace {
    /// `(t, mean, ci_low, ci_high, n_seeds)`.
    pub per_tick: Vec<(usize, f64, f64, f64, usize)>,
}

/// Aggregates per-seed `(t, value)` traces sharing one tick grid.
pub fn aggregate_runs(traces: &[Vec<(usize, f64)>]) -> Result<AggregateTrace> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument("aggregation needs at least two seeds"));
    }
    let grid: Vec<usize> = traces[0].iter().map(|e| e.0).collect();
    for trace in &traces[1..] {
        if trace.len() != grid.len() || trace.iter().zip(&grid).any(|(e, t)| e.0 != *t) {
            return Err(Error::InvalidArgument("per-seed traces use different tick grids"));
        }
    }
    let mut per_tick = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(traces.len());
    for (k, t) in grid.iter().enumerate() {
        column.clear();
        column.extend(traces.iter().map(|tr| tr[k].1));
        let iv = mean_interval(&column)?;
        per_tick.push((*t, iv.mean, iv.ci_low, iv.ci_high, traces.len()));
    }
    Ok(AggregateTrace { per_tick })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;

    #[test]
    fn centroid_reference_closed_form() {
        let p = Problem::centroid(vec![[0.0].into(), [4.0].into()]).unwrap();
        let r = solve_reference(&p, 1e-10, 10).unwrap();
        assert_eq!(r.theta_star.as_slice(), &[2.0]);
        assert_eq!(r.f_star, 2.0);
        assert!(r.converged);
        assert_eq!(instantaneous_regret(&p, &[0.0].into(), r.f_star).unwrap(), 2.0);
        assert_eq!(instantaneous_regret(&p, &r.theta_star, r.f_star).unwrap(), 0.0);
    }

    #[test]
    fn iterative_solver_matches_centroid_closed_form() {
        let mut rng = Rng::new(3);
        let points: Vec<DenseVector> =
            (0..50).map(|_| (0..4).map(|_| rng.gaussian()).collect::<Vec<_>>().into()).collect();
        let p = Problem::centroid(points).unwrap();
        let closed = solve_reference(&p, 1e-10, 1).unwrap();
        let iter = gradient_descent(&p, DenseVector::filled(4, 3.0), 1e-10, 10_000).unwrap();
        assert!(iter.converged);
        for h in 0..4 {
            assert!((closed.theta_star[h] - iter.theta_star[h]).abs() < 1e-9);
        }
    }

    #[test]
    fn logistic_reference_beats_random_probes() {
        let mut rng = Rng::new(9);
        let examples = (0..60)
            .map(|_| Example::dense((0..5).map(|_| rng.gaussian()).collect::<Vec<_>>(), rng.index(3)))
            .collect();
        let p = Problem::new(ProblemKind::MulticlassLogistic, examples, 0.1, 3).unwrap();
        let r = solve_reference(&p, 1e-8, 10_000).unwrap();
        assert!(r.converged, "grad norm {}", r.grad_norm_at_star);
        for _ in 0..100 {
            let theta: DenseVector =
                (0..p.param_dim()).map(|_| rng.gaussian()).collect::<Vec<_>>().into();
            assert!(r.f_star <= p.full_objective(&theta).unwrap());
            assert!(instantaneous_regret(&p, &theta, r.f_star).unwrap() >= -1e-8);
        }
    }

    #[test]
    fn unconverged_solve_is_flagged() {
        let examples = vec![Example::dense([1.0, 0.5], 1), Example::dense([-1.0, 0.2], 0)];
        let p = Problem::new(ProblemKind::BinaryLogistic, examples, 0.0, 2).unwrap();
        let r = solve_reference(&p, 1e-12, 3).unwrap();
        assert!(!r.converged);
        assert_eq!(r.solver_iterations, 3);
    }

    #[test]
    fn variance_examples() {
        let p = Problem::centroid(vec![[1.0].into(), [1.0].into()]).unwrap();
        assert_eq!(gradient_norm_variance(&p, &[5.0].into()).unwrap(), 0.0);
        // Norms {1, 3} at θ = 0.
        let p = Problem::centroid(vec![[1.0].into(), [-3.0].into()]).unwrap();
        assert_eq!(gradient_norm_variance(&p, &[0.0].into()).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_tie_rule_and_errors() {
        let examples = vec![
            Example::dense([1.0, 0.0], 0),
            Example::dense([0.0, 1.0], 1),
            Example::dense([1.0, 1.0], 0),
            Example::dense([2.0, 1.0], 2),
        ];
        let p = Problem::new(ProblemKind::MulticlassLogistic, examples.clone(), 0.0, 3).unwrap();
        let zero = DenseVector::zeros(p.param_dim());
        assert_eq!(accuracy(&p, &zero, &examples).unwrap(), 0.5);
        let bin = Problem::new(
            ProblemKind::BinaryLogistic,
            vec![Example::dense([1.0], 0), Example::dense([2.0], 1), Example::dense([3.0], 0)],
            0.0,
            2,
        )
        .unwrap();
        assert!((accuracy(&bin, &[0.0].into(), bin.examples()).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy(&bin, &[1.0].into(), &bin.examples()[1..2]).unwrap(), 1.0);
        let c = Problem::centroid(vec![[0.0].into()]).unwrap();
        assert!(matches!(accuracy(&c, &[0.0].into(), c.examples()), Err(Error::UnsupportedMetric(_))));
    }

    #[test]
    fn ledger_running_sum() {
        let mut ledger = RegretLedger::new();
        for t in 1..=100 {
            ledger.push(t, 1.0 / t as f64);
        }
        let mut sum = 0.0;
        for (t, inst, cum) in &ledger.per_step {
            sum += inst;
            assert!((sum - cum).abs() < 1e-9, "{t}");
        }
        assert!(ledger.average_regret_tail_slope() <= 0.0);
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|x| (x as f64, 3.0 * x as f64 - 1.0)).collect();
        assert!((least_squares_slope(&pts) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let a = vec![(1, 0.5), (2, 0.25)];
        let agg = aggregate_runs(&[a.clone(), a.clone(), a]).unwrap();
        for (_, mean, lo, hi, n) in &agg.per_tick {
            assert_eq!(lo, mean);
            assert_eq!(hi, mean);
            assert_eq!(*n, 3);
        }
        let agg = aggregate_runs(&[vec![(10, 0.0)], vec![(10, 2.0)]]).unwrap();
        let (_, mean, lo, hi, _) = agg.per_tick[0];
        assert_eq!(mean, 1.0);
        assert!((hi - mean - 1.96).abs() < 1e-12);
        assert!((mean - lo - 1.96).abs() < 1e-12);
    }

    #[test]
    fn aggregate_errors() {
        assert!(aggregate_runs(&[vec![(1, 0.0)]]).is_err());
        assert!(aggregate_runs(&[vec![(1, 0.0)], vec![(2, 0.0)]]).is_err());
    }

    #[test]
    fn duplicated_seeds_shrink_interval_by_sqrt_k() {
        let mut rng = Rng::new(6);
        let base: Vec<Vec<(usize, f64)>> =
            (0..5).map(|_| (1..=4).map(|t| (t, rng.gaussian())).collect()).collect();
        let once = aggregate_runs(&base).unwrap();
        let k = 4;
        let repeated: Vec<Vec<(usize, f64)>> = (0..k).flat_map(|_| base.iter().cloned()).collect();
        let many = aggregate_runs(&repeated).unwrap();
        let n = base.len() as f64;
        let nk = n * k as f64;
        for (a, b) in once.per_tick.iter().zip(&many.per_tick) {
            assert!((a.1 - b.1).abs() < 1e-12);
            // √k, times the Bessel correction of the duplicated sample.
            let ratio = libm::sqrt(k as f64) * libm::sqrt((nk - 1.0) / (k as f64 * (n - 1.0)));
            let expected = (a.3 - a.1) / ratio;
            assert!(((b.3 - b.1) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn intervals() {
        let iv = paired_difference(&[3.0, 5.0, 4.0], &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(iv.mean, 2.0);
        assert_eq!(iv.half_width(), 0.0);
        assert!(iv.excludes_zero());
        let iv = unpaired_difference(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
        assert_eq!(iv.mean, 0.0);
        assert!(!iv.excludes_zero());
    }
}
