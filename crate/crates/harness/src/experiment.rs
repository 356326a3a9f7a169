//! Experiment execution: data materialization, parallel runs, file output.
//!
//! An output directory receives
//!
//! * `trace_<optimizer>_seed<seed>.csv` for every run, partial when the run
//!   failed,
//! * `aggregate_<optimizer>.csv` over the successful seeds,
//! * `comparison.csv` with the reference optimizer's improvement over every
//!   other optimizer, both paired by seed and unpaired,
//! * `failures.csv`, `config.txt` (the normalized configuration) and
//!   `metadata.txt`.
//!
//! Runs execute in parallel; every file is written afterwards by one thread
//! in a fixed order, so the output bytes depend only on the configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dasgrad_core::metrics::{accuracy, gradient_norm_variance, paired_difference, solve_reference, unpaired_difference};
use dasgrad_core::optimizers::run_with;
use dasgrad_core::{Example, Problem, ProblemKind, ReferenceSolution, Rng, WeightMode};
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, NamedOptimizer, ProblemSpec, TestSource, Weighting};
use crate::dataset::{load_dense_csv, load_sparse, synth_centroid, synth_classification, unbalance, ClassMixture, Dataset};
use crate::error::HarnessError;
use crate::trace::{
    aggregate_traces, compare, fmt_f64, write_aggregate, write_comparison, write_failures, write_text, write_trace,
    AggregateRow, ComparisonRow, Failure, TraceRow,
};

/// Salt separating the synthetic test stream from the training stream.
const TEST_STREAM: u64 = 0x7e57_5e70;

/// A problem ready to optimize, with its evaluation set and optimum.
#[derive(Debug, Clone)]
pub struct Materialized {
    pub problem: Problem,
    /// Accuracy is measured here; `None` for centroid problems.
    pub eval: Option<Vec<Example>>,
    /// Label counts of the test set, for target weighting.
    pub target_counts: Option<Vec<usize>>,
    pub reference: ReferenceSolution,
    pub provenance: String,
    pub data_seed: u64,
}

fn load(source: &DataSource, data_seed: u64) -> Result<Dataset, HarnessError> {
    Ok(match source {
        DataSource::DenseCsv(p) => load_dense_csv(p)?,
        DataSource::Sparse(p) => load_sparse(p)?,
        DataSource::SynthCentroid { n, d, sigma } => synth_centroid(*n, *d, *sigma, data_seed),
        DataSource::SynthClassification { n, d, k, margin, sparsity } => {
            synth_classification(*n, *d, *k, *margin, *sparsity, data_seed)
        }
    })
}

fn load_test(spec: &ProblemSpec, data_seed: u64) -> Result<Option<Dataset>, HarnessError> {
    Ok(match &spec.test {
        TestSource::None => None,
        TestSource::DenseCsv(p) => Some(load_dense_csv(p)?),
        TestSource::Sparse(p) => Some(load_sparse(p)?),
        TestSource::Synth { n } => {
            let DataSource::SynthClassification { d, k, margin, sparsity, .. } = spec.source else {
                return Err(HarnessError::Config("test = synth needs source = synth-classification".into()));
            };
            let mixture = ClassMixture::new(d, k, margin, data_seed);
            let mut rng = Rng::new(data_seed ^ TEST_STREAM);
            Some(Dataset {
                examples: mixture.sample_balanced(*n, sparsity, &mut rng),
                d,
                k,
                provenance: format!("synth-test n={n} from the training mixture, seed={data_seed}"),
            })
        }
    })
}

/// Builds the training problem, evaluation set and reference optimum for
/// one data seed.
pub fn materialize(spec: &ProblemSpec, data_seed: u64, tol: f64, max_iters: usize) -> Result<Materialized, HarnessError> {
    let mut train = load(&spec.source, data_seed)?;
    if let Some(u) = &spec.unbalance {
        train = unbalance(&train, &u.labels, u.keep_fraction, data_seed)?;
        train.provenance.push_str(&format!(
            " unbalanced labels={:?} keep={} seed={data_seed}",
            u.labels, u.keep_fraction
        ));
    }
    let mut test = load_test(spec, data_seed)?;
    if spec.intercept {
        train = train.with_intercept();
        test = test.map(Dataset::with_intercept);
    }
    if let Some(t) = &test {
        if t.d != train.d {
            return Err(HarnessError::Config(format!("test set has d={} but training set has d={}", t.d, train.d)));
        }
        if t.k > train.k {
            return Err(HarnessError::Config("test set has more classes than the training set".into()));
        }
    }
    let k = train.k;
    let mut provenance = train.provenance.clone();
    if let Some(t) = &test {
        provenance.push_str(" | test: ");
        provenance.push_str(&t.provenance);
    }
    let problem = train.into_problem(spec.kind, spec.lambda)?;
    let (eval, target_counts) = if spec.kind == ProblemKind::Centroid {
        (None, None)
    } else {
        match test {
            Some(t) => {
                let mut counts = vec![0; k];
                for ex in &t.examples {
                    counts[ex.label] += 1;
                }
                (Some(t.examples), Some(counts))
            }
            None => (Some(problem.examples().to_vec()), None),
        }
    };
    let reference = solve_reference(&problem, tol, max_iters)?;
    Ok(Materialized { problem, eval, target_counts, reference, provenance, data_seed })
}

/// Outcome of one (optimizer, seed) run: the rows recorded so far and the
/// error that stopped it, if any.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<TraceRow>,
    pub error: Option<String>,
}

/// Runs one optimizer and records metrics every `metric_tick` steps. The
/// cumulative regret integrates the instantaneous regret over the steps
/// since the previous tick, so it is exact when `metric_tick = 1`.
pub fn run_traced(
    data: &Materialized,
    opt: &NamedOptimizer,
    steps: usize,
    seed: u64,
    metric_tick: usize,
) -> RunOutcome {
    let mut config = opt.config.clone();
    if opt.weighting == Weighting::Target {
        match &data.target_counts {
            Some(counts) => {
                config.weight_mode = WeightMode::Target { label_counts: counts.clone(), m: counts.iter().sum() }
            }
            None => return RunOutcome { rows: Vec::new(), error: Some("target weighting needs a test set".into()) },
        }
    }
    let problem = &data.problem;
    let f_star = data.reference.f_star;
    let mut rows: Vec<TraceRow> = Vec::with_capacity(steps / metric_tick);
    let mut cum = 0.0;
    let mut last_t = 0;
    let result = run_with(problem, &config, steps, seed, metric_tick, |record, theta| {
        if record.theta_snapshot_id.is_none() {
            return Ok(());
        }
        let loss = problem.full_objective(theta)?;
        let inst = loss - f_star;
        cum += inst * (record.t - last_t) as f64;
        last_t = record.t;
        let acc = match &data.eval {
            Some(eval) => Some(accuracy(problem, theta, eval)?),
            None => None,
        };
        rows.push(TraceRow {
            step: record.t,
            loss,
            accuracy: acc,
            inst_regret: inst,
            cum_regret: cum,
            grad_norm_var: gradient_norm_variance(problem, theta)?,
        });
        Ok(())
    });
    RunOutcome { rows, error: result.err().map(|e| e.to_string()) }
}

/// Everything an experiment wrote, also kept in memory.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub output: PathBuf,
    /// Keyed by (optimizer name, seed).
    pub runs: BTreeMap<(String, u64), RunOutcome>,
    pub aggregates: BTreeMap<String, Vec<AggregateRow>>,
    pub comparison: Vec<ComparisonRow>,
    pub failures: Vec<Failure>,
}

impl ExperimentOutput {
    /// Successful runs of `optimizer`, in seed order.
    pub fn successful(&self, optimizer: &str) -> Vec<(u64, &[TraceRow])> {
        self.runs
            .iter()
            .filter(|((name, _), r)| name == optimizer && r.error.is_none())
            .map(|((_, seed), r)| (*seed, r.rows.as_slice()))
            .collect()
    }

    /// Final-tick value of a per-run statistic for every successful seed.
    pub fn final_values(&self, optimizer: &str, f: impl Fn(&TraceRow) -> f64) -> Vec<(u64, f64)> {
        self.successful(optimizer)
            .into_iter()
            .filter_map(|(seed, rows)| rows.last().map(|r| (seed, f(r))))
            .collect()
    }
}

pub fn trace_file_name(optimizer: &str, seed: u64) -> String {
    format!("trace_{optimizer}_seed{seed}.csv")
}

pub fn aggregate_file_name(optimizer: &str) -> String {
    format!("aggregate_{optimizer}.csv")
}

/// Runs every (optimizer, seed) pair and writes the output directory.
/// Failed runs are recorded in `failures.csv` and left out of aggregates
/// and comparisons; they do not stop the other runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    let out = &config.output;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;

    let data_seed_of = |seed: u64| config.problem.data_seed.unwrap_or(seed);
    let data_seeds: BTreeSet<u64> = config.seeds.iter().map(|s| data_seed_of(*s)).collect();
    let data: BTreeMap<u64, Materialized> = data_seeds
        .into_par_iter()
        .map(|ds| materialize(&config.problem, ds, config.solver_tol, config.solver_max_iters).map(|m| (ds, m)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .collect();

    let jobs: Vec<(&NamedOptimizer, u64)> =
        config.optimizers.iter().flat_map(|o| config.seeds.iter().map(move |s| (o, *s))).collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|(opt, seed)| run_traced(&data[&data_seed_of(*seed)], opt, config.steps, *seed, config.metric_tick))
        .collect();

    let mut runs = BTreeMap::new();
    let mut failures = Vec::new();
    for ((opt, seed), outcome) in jobs.iter().zip(outcomes) {
        write_trace(&out.join(trace_file_name(&opt.name, *seed)), &outcome.rows)?;
        if let Some(message) = &outcome.error {
            failures.push(Failure { optimizer: opt.name.clone(), seed: *seed, message: message.clone() });
        }
        runs.insert((opt.name.clone(), *seed), outcome);
    }
    let mut output = ExperimentOutput {
        output: out.clone(),
        runs,
        aggregates: BTreeMap::new(),
        comparison: Vec::new(),
        failures,
    };

    for opt in &config.optimizers {
        let ok: Vec<&[TraceRow]> = output.successful(&opt.name).into_iter().map(|(_, r)| r).collect();
        let agg = aggregate_traces(&opt.name, &ok)?;
        write_aggregate(&out.join(aggregate_file_name(&opt.name)), &agg)?;
        output.aggregates.insert(opt.name.clone(), agg);
    }

    if let Some(reference) = config.reference_name() {
        for opt in config.optimizers.iter().filter(|o| o.name != reference) {
            let pairs: Vec<(&[TraceRow], &[TraceRow])> = config
                .seeds
                .iter()
                .filter_map(|s| {
                    let r = &output.runs[&(reference.to_string(), *s)];
                    let b = &output.runs[&(opt.name.clone(), *s)];
                    (r.error.is_none() && b.error.is_none()).then_some((r.rows.as_slice(), b.rows.as_slice()))
                })
                .collect();
            output.comparison.extend(compare(reference, &opt.name, &pairs)?);
        }
    }
    write_comparison(&out.join("comparison.csv"), &output.comparison)?;
    write_failures(&out.join("failures.csv"), &output.failures)?;
    write_text(&out.join("config.txt"), &config.render())?;
    write_text(&out.join("metadata.txt"), &metadata(config, &data))?;
    Ok(output)
}

fn metadata(config: &ExperimentConfig, data: &BTreeMap<u64, Materialized>) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "loss: full training objective, L2 regularizer included");
    let _ = writeln!(m, "inst_regret: loss - f_star, with f_star from the reference solver");
    let _ = writeln!(m, "cum_regret: inst_regret summed over steps, held constant between ticks");
    let _ = writeln!(m, "accuracy: {}", match config.problem.test {
        TestSource::None if config.problem.kind == ProblemKind::Centroid => "not applicable",
        TestSource::None => "training set",
        _ => "test set",
    });
    if matches!(config.problem.source, DataSource::SynthCentroid { .. } | DataSource::SynthClassification { .. }) {
        let _ = writeln!(m, "data: synthetic stand-in generated from the recipe below, not an external dataset");
    }
    let _ = writeln!(m, "grad_norm_var: population variance over examples of the per-example gradient norm");
    let _ = writeln!(m, "intervals: mean +/- 1.96 s/sqrt(n), s with the n-1 denominator");
    let _ = writeln!(m, "steps: {}  metric_tick: {}  seeds: {}", config.steps, config.metric_tick, config.seeds.len());
    for (seed, d) in data {
        let r = &d.reference;
        let _ = writeln!(
            m,
            "data_seed {seed}: n={} d={} | {} | f_star={} grad_norm={} iterations={} converged={}",
            d.problem.len(),
            d.problem.feature_dim(),
            d.provenance,
            fmt_f64(r.f_star),
            fmt_f64(r.grad_norm_at_star),
            r.solver_iterations,
            r.converged
        );
    }
    m
}

/// Settings of the variance sweep: one centroid experiment per `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    /// Template experiment; its data source is replaced per `σ`.
    pub base: ExperimentConfig,
}

/// Final cumulative-regret gap `baseline - reference` at one `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummaryRow {
    pub sigma: f64,
    pub baseline: String,
    pub reference: String,
    pub n_pairs: usize,
    pub baseline_mean: f64,
    pub reference_mean: f64,
    pub gap_mean: f64,
    pub gap_paired: (f64, f64),
    pub gap_unpaired: (f64, f64),
}

pub const SWEEP_SUMMARY_HEADER: [&str; 11] = [
    "sigma",
    "baseline",
    "reference",
    "n_pairs",
    "baseline_final_cum_regret",
    "reference_final_cum_regret",
    "gap_mean",
    "gap_paired_ci_low",
    "gap_paired_ci_high",
    "gap_unpaired_ci_low",
    "gap_unpaired_ci_high",
];

pub fn sigma_dir_name(sigma: f64) -> String {
    format!("sigma_{sigma}")
}

/// Runs the centroid experiment for every `σ` in its own subdirectory,
/// then writes `aggregate_sigma_<σ>.csv` (all optimizers) and
/// `summary.csv` at the top level.
pub fn sweep_variance(sweep: &SweepConfig) -> Result<Vec<SweepSummaryRow>, HarnessError> {
    let DataSource::SynthCentroid { n, d, .. } = sweep.base.problem.source else {
        return Err(HarnessError::Config("the variance sweep needs source = synth-centroid".into()));
    };
    let top = &sweep.base.output;
    fs::create_dir_all(top).map_err(|e| HarnessError::io(top, e))?;
    let mut summary = Vec::new();
    for &sigma in &sweep.sigmas {
        let mut config = sweep.base.clone();
        config.problem.source = DataSource::SynthCentroid { n, d, sigma };
        config.output = top.join(sigma_dir_name(sigma));
        let out = run_experiment(&config)?;
        let combined: Vec<AggregateRow> = out.aggregates.values().flatten().cloned().collect();
        write_aggregate(&top.join(format!("aggregate_{}.csv", sigma_dir_name(sigma))), &combined)?;

        let Some(reference) = config.reference_name() else { continue };
        let ref_final: BTreeMap<u64, f64> = out.final_values(reference, |r| r.cum_regret).into_iter().collect();
        for opt in config.optimizers.iter().filter(|o| o.name != reference) {
            let base_final: BTreeMap<u64, f64> = out.final_values(&opt.name, |r| r.cum_regret).into_iter().collect();
            let (b, r): (Vec<f64>, Vec<f64>) =
                base_final.iter().filter_map(|(s, b)| ref_final.get(s).map(|r| (*b, *r))).unzip();
            if b.len() < 2 {
                continue;
            }
            let paired = paired_difference(&b, &r)?;
            let unpaired = unpaired_difference(&b, &r)?;
            summary.push(SweepSummaryRow {
                sigma,
                baseline: opt.name.clone(),
                reference: reference.to_string(),
                n_pairs: b.len(),
                baseline_mean: b.iter().sum::<f64>() / b.len() as f64,
                reference_mean: r.iter().sum::<f64>() / r.len() as f64,
                gap_mean: paired.mean,
                gap_paired: (paired.ci_low, paired.ci_high),
                gap_unpaired: (unpaired.ci_low, unpaired.ci_high),
            });
        }
    }
    write_sweep_summary(&top.join("summary.csv"), &summary)?;
    Ok(summary)
}

fn write_sweep_summary(path: &Path, rows: &[SweepSummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.sigma),
            r.baseline.clone(),
            r.reference.clone(),
            r.n_pairs.to_string(),
            fmt_f64(r.baseline_mean),
            fmt_f64(r.reference_mean),
            fmt_f64(r.gap_mean),
            fmt_f64(r.gap_paired.0),
            fmt_f64(r.gap_paired.1),
            fmt_f64(r.gap_unpaired.0),
            fmt_f64(r.gap_unpaired.1),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn tiny(output: &Path) -> ExperimentConfig {
        let text = format!(
            "kind = multiclass\nsource = synth-classification\nn = 60\nd = 4\nk = 3\nmargin = 3\nlambda = 1e-3\n\
             steps = 20\nseeds = 1,2,3\nmetric_tick = 5\noutput = {}\n\
             [optimizer.amsgrad]\n[optimizer.dasgrad]\nrefresh = 3\n",
            output.display()
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn materialize_builds_test_and_counts() {
        let spec = presets::matching(Path::new("unused"), 2).problem;
        let m = materialize(&spec, 5, 1e-8, 5000).unwrap();
        let counts = m.target_counts.as_ref().unwrap();
        assert_eq!(counts.iter().sum::<usize>(), m.eval.as_ref().unwrap().len());
        assert_eq!(counts[0], counts[1]);
        let train = m.problem.label_counts();
        assert!(train[1] * 3 < train[0] && train[3] * 3 < train[2]);
        assert_eq!(m.problem.feature_dim(), 21);
        assert!(m.reference.converged);
    }

    #[test]
    fn experiment_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&tiny(dir.path())).unwrap();
        for name in ["comparison.csv", "failures.csv", "config.txt", "metadata.txt", "aggregate_dasgrad.csv"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        assert!(dir.path().join(trace_file_name("amsgrad", 3)).exists());
        assert_eq!(out.runs.len(), 6);
        assert!(out.failures.is_empty());
        assert_eq!(out.comparison.len(), 4);
        let rows = &out.runs[&("dasgrad".to_string(), 1)].rows;
        assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![5, 10, 15, 20]);
        // Piecewise-constant integration of the instantaneous regret.
        let cum: f64 = rows.iter().map(|r| 5.0 * r.inst_regret).sum();
        assert!((rows[3].cum_regret - cum).abs() < 1e-12 * cum.abs().max(1.0));
    }

    #[test]
    fn divergent_runs_are_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "kind = centroid\nsource = synth-centroid\nn = 20\nd = 3\nsigma = 1\nsteps = 10\nseeds = 0..3\n\
             output = {}\n[optimizer.huge]\nmethod = sgd\nalpha = 1e300\nbounds = -inf,inf\n[optimizer.dasgrad]\n",
            dir.path().display()
        );
        let out = run_experiment(&ExperimentConfig::parse(&text).unwrap()).unwrap();
        assert_eq!(out.failures.len(), 3);
        assert!(out.failures[0].message.contains("step"), "{}", out.failures[0].message);
        assert!(out.aggregates["huge"].is_empty());
        assert_eq!(out.aggregates["dasgrad"].len(), 10);
        assert!(out.comparison.is_empty());
        let failures = crate::trace::read_failures(&dir.path().join("failures.csv")).unwrap();
        assert_eq!(failures, out.failures);
    }
}
