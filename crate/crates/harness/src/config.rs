//! Experiment configuration files.
//!
//! The format is flat `key = value` text, one entry per line. `#` starts a
//! comment. Top-level keys describe the problem and the run grid; each
//! optimizer gets its own `[optimizer.<name>]` section:
//!
//! ```text
//! kind = multiclass
//! source = synth-classification
//! n = 2000
//! d = 100
//! k = 10
//! margin = 4
//! lambda = 0.001
//! steps = 2000
//! seeds = 0..10
//! metric_tick = 100
//! output = out/figure1
//!
//! [optimizer.adam]
//! alpha = 0.01
//!
//! [optimizer.dasgrad]
//! alpha = 0.01
//! ```
//!
//! The section name doubles as the method name unless a `method` key says
//! otherwise, so `[optimizer.dasgrad-target]` with `method = dasgrad` and
//! `weighting = target` is a second DASGrad run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dasgrad_core::{BoxBounds, Method, OptimizerConfig, ProblemKind, ScoreMode};

use crate::error::HarnessError;

/// Where the training examples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    DenseCsv(PathBuf),
    Sparse(PathBuf),
    SynthCentroid { n: usize, d: usize, sigma: f64 },
    SynthClassification { n: usize, d: usize, k: usize, margin: f64, sparsity: f64 },
}

/// Held-out examples used for accuracy.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSource {
    /// Accuracy is measured on the training set.
    None,
    DenseCsv(PathBuf),
    Sparse(PathBuf),
    /// Balanced draw of `n` examples from the training mixture.
    Synth { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unbalance {
    pub labels: BTreeSet<usize>,
    pub keep_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub source: DataSource,
    pub lambda: f64,
    pub intercept: bool,
    pub unbalance: Option<Unbalance>,
    pub test: TestSource,
    /// Fixed seed for data synthesis and unbalancing. When absent each run
    /// seed also seeds its own dataset.
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Training,
    /// Reweight toward the label mixture of the test set.
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedOptimizer {
    pub name: String,
    /// The `weight_mode` field is overwritten at run time from `weighting`.
    pub config: OptimizerConfig,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizers: Vec<NamedOptimizer>,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub metric_tick: usize,
    pub output: PathBuf,
    /// Optimizer the comparison file measures improvement for. Defaults to
    /// the first DASGrad optimizer.
    pub reference: Option<String>,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut top = Entries::default();
        let mut sections: Vec<(String, usize, Entries)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let inner = header
                    .strip_suffix(']')
                    .ok_or_else(|| HarnessError::parse(line_no, "unterminated section header"))?
                    .trim();
                let name = inner
                    .strip_prefix("optimizer.")
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| HarnessError::parse(line_no, format!("unknown section [{inner}]")))?;
                if sections.iter().any(|(n, _, _)| n == name) {
                    return Err(HarnessError::parse(line_no, format!("duplicate section [optimizer.{name}]")));
                }
                sections.push((name.to_string(), line_no, Entries::default()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::parse(line_no, format!("expected `key = value`, got {line:?}")))?;
            let entries = match sections.last_mut() {
                Some((_, _, e)) => e,
                None => &mut top,
            };
            entries.insert(key.trim(), value.trim(), line_no)?;
        }

        let problem = parse_problem(&mut top)?;
        let steps = top.take_parsed("steps")?.ok_or_else(|| missing("steps"))?;
        let seeds = match top.take("seeds") {
            Some((v, line)) => parse_seeds(&v, line)?,
            None => return Err(missing("seeds")),
        };
        let metric_tick = top.take_parsed("metric_tick")?.unwrap_or(1);
        let output = top.take("output").map(|(v, _)| PathBuf::from(v)).ok_or_else(|| missing("output"))?;
        let reference = top.take("reference").map(|(v, _)| v);
        let solver_tol = top.take_parsed("solver_tol")?.unwrap_or(1e-8);
        let solver_max_iters = top.take_parsed("solver_max_iters")?.unwrap_or(20_000);
        top.reject_leftovers()?;

        let mut optimizers = Vec::with_capacity(sections.len());
        for (name, line, mut entries) in sections {
            optimizers.push(parse_optimizer(name, line, &mut entries)?);
        }
        let config = ExperimentConfig {
            problem,
            optimizers,
            steps,
            seeds,
            metric_tick,
            output,
            reference,
            solver_tol,
            solver_max_iters,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.optimizers.is_empty() {
            return Err(HarnessError::Config("at least one [optimizer.<name>] section is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        if self.steps == 0 || self.metric_tick == 0 {
            return Err(HarnessError::Config("steps and metric_tick must be positive".into()));
        }
        for opt in &self.optimizers {
            if !opt.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(HarnessError::Config(format!("optimizer name {:?} must be [A-Za-z0-9_-]", opt.name)));
            }
            opt.config
                .validate()
                .map_err(|e| HarnessError::Config(format!("optimizer {}: {e}", opt.name)))?;
            if opt.weighting == Weighting::Target {
                if !self.problem.kind.is_classification() {
                    return Err(HarnessError::Config(format!(
                        "optimizer {}: target weighting needs a classification problem",
                        opt.name
                    )));
                }
                if self.problem.test == TestSource::None {
                    return Err(HarnessError::Config(format!(
                        "optimizer {}: target weighting needs a test set",
                        opt.name
                    )));
                }
            }
        }
        if let Some(r) = &self.reference {
            if !self.optimizers.iter().any(|o| &o.name == r) {
                return Err(HarnessError::Config(format!("reference optimizer {r:?} is not defined")));
            }
        }
        let p = &self.problem;
        if !(p.lambda >= 0.0) || (p.kind == ProblemKind::Centroid && p.lambda != 0.0) {
            return Err(HarnessError::Config("lambda must be >= 0, and 0 for centroid problems".into()));
        }
        match (&p.source, p.kind) {
            (DataSource::SynthCentroid { .. }, k) if k != ProblemKind::Centroid => {
                return Err(HarnessError::Config("synth-centroid data needs kind = centroid".into()))
            }
            (DataSource::SynthClassification { k, .. }, ProblemKind::BinaryLogistic) if *k != 2 => {
                return Err(HarnessError::Config("binary problems need k = 2".into()))
            }
            (DataSource::SynthClassification { .. }, ProblemKind::Centroid) => {
                return Err(HarnessError::Config("synth-classification data needs a logistic kind".into()))
            }
            _ => {}
        }
        if matches!(p.test, TestSource::Synth { .. }) && !matches!(p.source, DataSource::SynthClassification { .. })
        {
            return Err(HarnessError::Config("test = synth needs source = synth-classification".into()));
        }
        if let Some(u) = &p.unbalance {
            if !(u.keep_fraction > 0.0 && u.keep_fraction <= 1.0) {
                return Err(HarnessError::Config("keep_fraction must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Name of the optimizer the comparison file is built around.
    pub fn reference_name(&self) -> Option<&str> {
        match &self.reference {
            Some(r) => Some(r.as_str()),
            None => self.optimizers.iter().find(|o| o.config.method == Method::Dasgrad).map(|o| o.name.as_str()),
        }
    }

    /// Renders the configuration back to the text format. Parsing the
    /// result yields an equal configuration.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let p = &self.problem;
        let kind = match p.kind {
            ProblemKind::Centroid => "centroid",
            ProblemKind::BinaryLogistic => "binary",
            ProblemKind::MulticlassLogistic => "multiclass",
        };
        let _ = writeln!(out, "kind = {kind}");
        match &p.source {
            DataSource::DenseCsv(path) => {
                let _ = writeln!(out, "source = dense-csv\npath = {}", path.display());
            }
            DataSource::Sparse(path) => {
                let _ = writeln!(out, "source = sparse\npath = {}", path.display());
            }
            DataSource::SynthCentroid { n, d, sigma } => {
                let _ = writeln!(out, "source = synth-centroid\nn = {n}\nd = {d}\nsigma = {sigma:?}");
            }
            DataSource::SynthClassification { n, d, k, margin, sparsity } => {
                let _ = writeln!(
                    out,
                    "source = synth-classification\nn = {n}\nd = {d}\nk = {k}\nmargin = {margin:?}\nsparsity = {sparsity:?}"
                );
            }
        }
        let _ = writeln!(out, "lambda = {:?}", p.lambda);
        let _ = writeln!(out, "intercept = {}", p.intercept);
        if let Some(u) = &p.unbalance {
            let labels: Vec<String> = u.labels.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(out, "unbalance_labels = {}\nkeep_fraction = {:?}", labels.join(","), u.keep_fraction);
        }
        match &p.test {
            TestSource::None => {}
            TestSource::DenseCsv(path) => {
                let _ = writeln!(out, "test = dense-csv\ntest_path = {}", path.display());
            }
            TestSource::Sparse(path) => {
                let _ = writeln!(out, "test = sparse\ntest_path = {}", path.display());
            }
            TestSource::Synth { n } => {
                let _ = writeln!(out, "test = synth\ntest_n = {n}");
            }
        }
        if let Some(s) = p.data_seed {
            let _ = writeln!(out, "data_seed = {s}");
        }
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "steps = {}\nseeds = {}\nmetric_tick = {}", self.steps, seeds.join(","), self.metric_tick);
        let _ = writeln!(out, "output = {}", self.output.display());
        if let Some(r) = &self.reference {
            let _ = writeln!(out, "reference = {r}");
        }
        let _ = writeln!(out, "solver_tol = {:?}\nsolver_max_iters = {}", self.solver_tol, self.solver_max_iters);
        for opt in &self.optimizers {
            let c = &opt.config;
            let _ = writeln!(out, "\n[optimizer.{}]", opt.name);
            let _ = writeln!(out, "method = {}", c.method);
            let _ = writeln!(out, "alpha = {:?}\nbeta1 = {:?}\nbeta2 = {:?}", c.alpha, c.beta1, c.beta2);
            let _ = writeln!(out, "epsilon = {:?}\nepsilon_prob = {:?}", c.epsilon_div, c.epsilon_prob);
            let _ = writeln!(out, "batch = {}\nrefresh = {}", c.batch_size, c.refresh_period);
            let score = match c.score_mode {
                ScoreMode::Momentum => "momentum",
                ScoreMode::Gradient => "gradient",
            };
            let _ = writeln!(out, "score_mode = {score}");
            if let Some(decay) = c.beta1_decay {
                let _ = writeln!(out, "beta1_decay = {decay:?}");
            }
            let _ = writeln!(out, "freeze = {}", c.freeze_probabilities);
            let weighting = match opt.weighting {
                Weighting::Training => "training",
                Weighting::Target => "target",
            };
            let _ = writeln!(out, "weighting = {weighting}");
            if let BoxBounds::Uniform { lo, hi } = c.projection {
                let _ = writeln!(out, "bounds = {lo:?},{hi:?}");
            }
        }
        out
    }
}

#[derive(Debug, Default)]
struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<(), HarnessError> {
        if key.is_empty() {
            return Err(HarnessError::parse(line, "empty key"));
        }
        if let Some((_, first)) = self.map.get(key) {
            return Err(HarnessError::parse(line, format!("key {key:?} already set on line {first}")));
        }
        self.map.insert(key.to_string(), (value.to_string(), line));
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.take(key) {
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| HarnessError::parse(line, format!("invalid value {v:?} for {key}"))),
            None => Ok(None),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, HarnessError> {
        self.take_parsed(key)?.ok_or_else(|| missing(key))
    }

    fn reject_leftovers(&self) -> Result<(), HarnessError> {
        match self.map.iter().min_by_key(|(_, (_, line))| *line) {
            Some((key, (_, line))) => Err(HarnessError::parse(*line, format!("unknown key {key:?}"))),
            None => Ok(()),
        }
    }
}

fn missing(key: &str) -> HarnessError {
    HarnessError::Config(format!("missing required key {key:?}"))
}

fn parse_bool(v: &str, line: usize) -> Result<bool, HarnessError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(HarnessError::parse(line, format!("expected true or false, got {v:?}"))),
    }
}

/// `a,b,c` or a half-open range `lo..hi`.
pub fn parse_seeds(v: &str, line: usize) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::parse(line, format!("invalid seed list {v:?}"));
    if let Some((lo, hi)) = v.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        return Ok((lo..hi).collect());
    }
    v.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_problem(top: &mut Entries) -> Result<ProblemSpec, HarnessError> {
    let (kind_text, kind_line) = top.take("kind").ok_or_else(|| missing("kind"))?;
    let kind = match kind_text.as_str() {
        "centroid" => ProblemKind::Centroid,
        "binary" => ProblemKind::BinaryLogistic,
        "multiclass" => ProblemKind::MulticlassLogistic,
        other => return Err(HarnessError::parse(kind_line, format!("unknown kind {other:?}"))),
    };
    let (source_text, source_line) = top.take("source").ok_or_else(|| missing("source"))?;
    let source = match source_text.as_str() {
        "dense-csv" => DataSource::DenseCsv(top.take("path").map(|(v, _)| v.into()).ok_or_else(|| missing("path"))?),
        "sparse" => DataSource::Sparse(top.take("path").map(|(v, _)| v.into()).ok_or_else(|| missing("path"))?),
        "synth-centroid" => DataSource::SynthCentroid {
            n: top.require("n")?,
            d: top.require("d")?,
            sigma: top.require("sigma")?,
        },
        "synth-classification" => DataSource::SynthClassification {
            n: top.require("n")?,
            d: top.require("d")?,
            k: top.require("k")?,
            margin: top.require("margin")?,
            sparsity: top.take_parsed("sparsity")?.unwrap_or(0.0),
        },
        other => return Err(HarnessError::parse(source_line, format!("unknown source {other:?}"))),
    };
    let lambda = top.take_parsed("lambda")?.unwrap_or(0.0);
    let intercept = match top.take("intercept") {
        Some((v, line)) => parse_bool(&v, line)?,
        None => false,
    };
    let unbalance = match top.take("unbalance_labels") {
        Some((v, line)) => {
            let labels = v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<BTreeSet<usize>, _>>()
                .map_err(|_| HarnessError::parse(line, format!("invalid label list {v:?}")))?;
            Some(Unbalance { labels, keep_fraction: top.require("keep_fraction")? })
        }
        None => None,
    };
    let test = match top.take("test") {
        None => TestSource::None,
        Some((v, line)) => match v.as_str() {
            "none" => TestSource::None,
            "synth" => TestSource::Synth { n: top.require("test_n")? },
            "dense-csv" => {
                TestSource::DenseCsv(top.take("test_path").map(|(v, _)| v.into()).ok_or_else(|| missing("test_path"))?)
            }
            "sparse" => {
                TestSource::Sparse(top.take("test_path").map(|(v, _)| v.into()).ok_or_else(|| missing("test_path"))?)
            }
            other => return Err(HarnessError::parse(line, format!("unknown test source {other:?}"))),
        },
    };
    let data_seed = top.take_parsed("data_seed")?;
    Ok(ProblemSpec { kind, source, lambda, intercept, unbalance, test, data_seed })
}

fn parse_optimizer(name: String, header_line: usize, e: &mut Entries) -> Result<NamedOptimizer, HarnessError> {
    let method = match e.take("method") {
        Some((v, line)) => {
            Method::from_name(&v).ok_or_else(|| HarnessError::parse(line, format!("unknown method {v:?}")))?
        }
        None => Method::from_name(&name).ok_or_else(|| {
            HarnessError::parse(header_line, format!("section {name:?} is not a method name; add `method = ...`"))
        })?,
    };
    let mut c = OptimizerConfig::new(method);
    if let Some(v) = e.take_parsed("alpha")? {
        c.alpha = v;
    }
    if let Some(v) = e.take_parsed("beta1")? {
        c.beta1 = v;
    }
    if let Some(v) = e.take_parsed("beta2")? {
        c.beta2 = v;
    }
    if let Some(v) = e.take_parsed("epsilon")? {
        c.epsilon_div = v;
    }
    if let Some(v) = e.take_parsed("epsilon_prob")? {
        c.epsilon_prob = v;
    }
    if let Some(v) = e.take_parsed("batch")? {
        c.batch_size = v;
    }
    if let Some(v) = e.take_parsed("refresh")? {
        c.refresh_period = v;
    }
    if let Some(v) = e.take_parsed("beta1_decay")? {
        c.beta1_decay = Some(v);
    }
    if let Some((v, line)) = e.take("score_mode") {
        c.score_mode = match v.as_str() {
            "momentum" => ScoreMode::Momentum,
            "gradient" => ScoreMode::Gradient,
            other => return Err(HarnessError::parse(line, format!("unknown score_mode {other:?}"))),
        };
    }
    if let Some((v, line)) = e.take("freeze") {
        c.freeze_probabilities = parse_bool(&v, line)?;
    }
    let weighting = match e.take("weighting") {
        None => Weighting::Training,
        Some((v, line)) => match v.as_str() {
            "training" => Weighting::Training,
            "target" => Weighting::Target,
            other => return Err(HarnessError::parse(line, format!("unknown weighting {other:?}"))),
        },
    };
    if let Some((v, line)) = e.take("bounds") {
        let bad = || HarnessError::parse(line, format!("expected `lo,hi`, got {v:?}"));
        let (lo, hi) = v.split_once(',').ok_or_else(bad)?;
        c.projection = BoxBounds::Uniform {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
        };
    }
    e.reject_leftovers()?;
    Ok(NamedOptimizer { name, config: c, weighting })
}
