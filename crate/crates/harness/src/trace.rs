//! CSV traces: per-run metric rows, cross-seed aggregates and comparisons.
//!
//! Every float is written with 17 significant digits so that reading a file
//! back reproduces the in-memory value bit for bit. Empty cells mean "not
//! applicable" (accuracy on centroid problems, intervals from fewer than two
//! seeds).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use dasgrad_core::metrics::{aggregate_runs, paired_difference, unpaired_difference};

use crate::error::HarnessError;

pub const TRACE_HEADER: [&str; 6] = ["step", "loss", "accuracy", "inst_regret", "cum_regret", "grad_norm_var"];

/// Metric names shared by traces and aggregates, in column order.
pub const METRICS: [&str; 5] = ["loss", "accuracy", "inst_regret", "cum_regret", "grad_norm_var"];

/// One metric tick of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Full training objective, regularizer included.
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub grad_norm_var: f64,
}

impl TraceRow {
    pub fn metric(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.loss),
            1 => self.accuracy,
            2 => Some(self.inst_regret),
            3 => Some(self.cum_regret),
            4 => Some(self.grad_norm_var),
            _ => None,
        }
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<csv::Writer<File>, HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), HarnessError> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn open(path: &Path) -> Result<csv::Reader<File>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(r: &mut csv::Reader<File>, expected: &[String]) -> Result<(), HarnessError> {
    let header = r.headers()?;
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(HarnessError::parse(1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    Ok(())
}

fn field_f64(rec: &csv::StringRecord, k: usize, line: usize) -> Result<f64, HarnessError> {
    let s = rec.get(k).unwrap_or("");
    s.parse().map_err(|_| HarnessError::parse(line, format!("column {}: invalid number {s:?}", k + 1)))
}

fn field_opt(rec: &csv::StringRecord, k: usize, line: usize) -> Result<Option<f64>, HarnessError> {
    if rec.get(k).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field_f64(rec, k, line).map(Some)
    }
}

fn field_usize(rec: &csv::StringRecord, k: usize, line: usize) -> Result<usize, HarnessError> {
    let s = rec.get(k).unwrap_or("");
    s.parse().map_err(|_| HarnessError::parse(line, format!("column {}: invalid integer {s:?}", k + 1)))
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            fmt_f64(r.loss),
            fmt_opt(r.accuracy),
            fmt_f64(r.inst_regret),
            fmt_f64(r.cum_regret),
            fmt_f64(r.grad_norm_var),
        ])?;
    }
    finish(w, path)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let mut r = open(path)?;
    check_header(&mut r, &TRACE_HEADER.map(String::from))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = line_of(&rec);
        rows.push(TraceRow {
            step: field_usize(&rec, 0, line)?,
            loss: field_f64(&rec, 1, line)?,
            accuracy: field_opt(&rec, 2, line)?,
            inst_regret: field_f64(&rec, 3, line)?,
            cum_regret: field_f64(&rec, 4, line)?,
            grad_norm_var: field_f64(&rec, 5, line)?,
        });
    }
    Ok(rows)
}

/// Mean and 95% interval of one metric at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub optimizer: String,
    pub step: usize,
    pub n_seeds: usize,
    /// One entry per [`METRICS`] name; `None` when the metric does not apply.
    pub metrics: [Option<Summary>; 5],
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["optimizer".to_string(), "step".into(), "n_seeds".into()];
    for m in METRICS {
        h.extend([format!("{m}_mean"), format!("{m}_ci_low"), format!("{m}_ci_high")]);
    }
    h
}

/// Cross-seed aggregate of successful runs sharing one tick grid. Intervals
/// come from [`aggregate_runs`]; a single run gets its values as means and
/// empty intervals.
pub fn aggregate_traces(optimizer: &str, runs: &[&[TraceRow]]) -> Result<Vec<AggregateRow>, HarnessError> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let mut rows: Vec<AggregateRow> = first
        .iter()
        .map(|r| AggregateRow { optimizer: optimizer.to_string(), step: r.step, n_seeds: runs.len(), metrics: [None; 5] })
        .collect();
    for k in 0..METRICS.len() {
        if first.iter().any(|r| r.metric(k).is_none()) {
            continue;
        }
        let per_seed: Vec<Vec<(usize, f64)>> = runs
            .iter()
            .map(|run| run.iter().map(|r| (r.step, r.metric(k).unwrap_or(f64::NAN))).collect())
            .collect();
        if runs.len() == 1 {
            for (row, (_, v)) in rows.iter_mut().zip(&per_seed[0]) {
                row.metrics[k] = Some(Summary { mean: *v, ci_low: None, ci_high: None });
            }
            continue;
        }
        let agg = aggregate_runs(&per_seed)?;
        for (row, (_, mean, lo, hi, _)) in rows.iter_mut().zip(agg.per_tick) {
            row.metrics[k] = Some(Summary { mean, ci_low: Some(lo), ci_high: Some(hi) });
        }
    }
    Ok(rows)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    w.write_record(aggregate_header())?;
    for r in rows {
        let mut rec = vec![r.optimizer.clone(), r.step.to_string(), r.n_seeds.to_string()];
        for m in &r.metrics {
            match m {
                Some(s) => rec.extend([fmt_f64(s.mean), fmt_opt(s.ci_low), fmt_opt(s.ci_high)]),
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(rec)?;
    }
    finish(w, path)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut r = open(path)?;
    check_header(&mut r, &aggregate_header())?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let mut metrics = [None; 5];
        for (k, slot) in metrics.iter_mut().enumerate() {
            let base = 3 + 3 * k;
            if let Some(mean) = field_opt(&rec, base, line)? {
                *slot = Some(Summary {
                    mean,
                    ci_low: field_opt(&rec, base + 1, line)?,
                    ci_high: field_opt(&rec, base + 2, line)?,
                });
            }
        }
        rows.push(AggregateRow {
            optimizer: rec.get(0).unwrap_or("").to_string(),
            step: field_usize(&rec, 1, line)?,
            n_seeds: field_usize(&rec, 2, line)?,
            metrics,
        });
    }
    Ok(rows)
}

/// Improvement of the reference optimizer over one baseline at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub mean: f64,
    pub paired_low: f64,
    pub paired_high: f64,
    pub unpaired_low: f64,
    pub unpaired_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub reference: String,
    pub baseline: String,
    pub step: usize,
    /// Seeds where both runs succeeded.
    pub n_pairs: usize,
    /// `baseline - reference`: positive when the reference has lower loss.
    pub loss: Option<Improvement>,
    /// `reference - baseline`.
    pub accuracy: Option<Improvement>,
}

pub const COMPARISON_HEADER: [&str; 14] = [
    "reference",
    "baseline",
    "step",
    "n_pairs",
    "loss_improvement_mean",
    "loss_paired_ci_low",
    "loss_paired_ci_high",
    "loss_unpaired_ci_low",
    "loss_unpaired_ci_high",
    "accuracy_improvement_mean",
    "accuracy_paired_ci_low",
    "accuracy_paired_ci_high",
    "accuracy_unpaired_ci_low",
    "accuracy_unpaired_ci_high",
];

fn improvement(better: &[f64], worse: &[f64]) -> Result<Improvement, HarnessError> {
    let paired = paired_difference(better, worse)?;
    let unpaired = unpaired_difference(better, worse)?;
    Ok(Improvement {
        mean: paired.mean,
        paired_low: paired.ci_low,
        paired_high: paired.ci_high,
        unpaired_low: unpaired.ci_low,
        unpaired_high: unpaired.ci_high,
    })
}

/// Per-tick improvement of `reference` over `baseline` from runs paired by
/// seed. Needs at least two pairs; returns no rows otherwise.
pub fn compare(
    reference: &str,
    baseline: &str,
    pairs: &[(&[TraceRow], &[TraceRow])],
) -> Result<Vec<ComparisonRow>, HarnessError> {
    if pairs.len() < 2 {
        return Ok(Vec::new());
    }
    let ticks = pairs[0].0.len();
    if pairs.iter().any(|(a, b)| a.len() != ticks || b.len() != ticks) {
        return Err(HarnessError::Config("runs being compared use different tick grids".into()));
    }
    let mut rows = Vec::with_capacity(ticks);
    for j in 0..ticks {
        let ref_loss: Vec<f64> = pairs.iter().map(|(r, _)| r[j].loss).collect();
        let base_loss: Vec<f64> = pairs.iter().map(|(_, b)| b[j].loss).collect();
        let loss = Some(improvement(&base_loss, &ref_loss)?);
        let ref_acc: Option<Vec<f64>> = pairs.iter().map(|(r, _)| r[j].accuracy).collect();
        let base_acc: Option<Vec<f64>> = pairs.iter().map(|(_, b)| b[j].accuracy).collect();
        let accuracy = match (ref_acc, base_acc) {
            (Some(r), Some(b)) => Some(improvement(&r, &b)?),
            _ => None,
        };
        rows.push(ComparisonRow {
            reference: reference.to_string(),
            baseline: baseline.to_string(),
            step: pairs[0].0[j].step,
            n_pairs: pairs.len(),
            loss,
            accuracy,
        });
    }
    Ok(rows)
}

fn push_improvement(rec: &mut Vec<String>, v: &Option<Improvement>) {
    match v {
        Some(i) => rec.extend(
            [i.mean, i.paired_low, i.paired_high, i.unpaired_low, i.unpaired_high].map(fmt_f64),
        ),
        None => rec.extend(std::iter::repeat_n(String::new(), 5)),
    }
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        let mut rec = vec![r.reference.clone(), r.baseline.clone(), r.step.to_string(), r.n_pairs.to_string()];
        push_improvement(&mut rec, &r.loss);
        push_improvement(&mut rec, &r.accuracy);
        w.write_record(rec)?;
    }
    finish(w, path)
}

fn read_improvement(rec: &csv::StringRecord, base: usize, line: usize) -> Result<Option<Improvement>, HarnessError> {
    let Some(mean) = field_opt(rec, base, line)? else {
        return Ok(None);
    };
    Ok(Some(Improvement {
        mean,
        paired_low: field_f64(rec, base + 1, line)?,
        paired_high: field_f64(rec, base + 2, line)?,
        unpaired_low: field_f64(rec, base + 3, line)?,
        unpaired_high: field_f64(rec, base + 4, line)?,
    }))
}

pub fn read_comparison(path: &Path) -> Result<Vec<ComparisonRow>, HarnessError> {
    let mut r = open(path)?;
    check_header(&mut r, &COMPARISON_HEADER.map(String::from))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = line_of(&rec);
        rows.push(ComparisonRow {
            reference: rec.get(0).unwrap_or("").to_string(),
            baseline: rec.get(1).unwrap_or("").to_string(),
            step: field_usize(&rec, 2, line)?,
            n_pairs: field_usize(&rec, 3, line)?,
            loss: read_improvement(&rec, 4, line)?,
            accuracy: read_improvement(&rec, 9, line)?,
        });
    }
    Ok(rows)
}

/// A run that stopped with an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub optimizer: String,
    pub seed: u64,
    pub message: String,
}

pub fn write_failures(path: &Path, failures: &[Failure]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    w.write_record(["optimizer", "seed", "error"])?;
    for f in failures {
        w.write_record([f.optimizer.as_str(), &f.seed.to_string(), f.message.as_str()])?;
    }
    finish(w, path)
}

pub fn read_failures(path: &Path) -> Result<Vec<Failure>, HarnessError> {
    let mut r = open(path)?;
    check_header(&mut r, &["optimizer", "seed", "error"].map(String::from))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let seed = rec.get(1).unwrap_or("").parse().map_err(|_| HarnessError::parse(line, "invalid seed"))?;
        out.push(Failure {
            optimizer: rec.get(0).unwrap_or("").to_string(),
            seed,
            message: rec.get(2).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

/// Writes `text` to `path`, mapping errors to the path.
pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    let mut f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, loss: f64, acc: Option<f64>) -> TraceRow {
        TraceRow { step, loss, accuracy: acc, inst_regret: loss - 0.5, cum_regret: step as f64 * loss, grad_norm_var: 0.1 }
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, f64::MIN_POSITIVE, 123456789.12345679] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![row(1, 1.0 / 3.0, None), row(2, 0.25, None)];
        write_trace(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,loss,accuracy,inst_regret,cum_regret,grad_norm_var\n1,3.3333333333333331e-1,,"));
        assert_eq!(read_trace(&path).unwrap(), rows);

        let rows = vec![row(5, 0.7, Some(0.9))];
        write_trace(&path, &rows).unwrap();
        assert_eq!(read_trace(&path).unwrap(), rows);
    }

    #[test]
    fn trace_reader_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "step,loss\n1,2\n").unwrap();
        assert!(read_trace(&path).is_err());
        std::fs::write(&path, "step,loss,accuracy,inst_regret,cum_regret,grad_norm_var\n1,x,,0,0,0\n").unwrap();
        let err = read_trace(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn aggregate_matches_direct_statistics() {
        let a = vec![row(1, 1.0, Some(0.5)), row(2, 0.5, Some(0.75))];
        let b = vec![row(1, 3.0, Some(0.25)), row(2, 1.5, Some(0.75))];
        let agg = aggregate_traces("adam", &[&a, &b]).unwrap();
        assert_eq!(agg.len(), 2);
        let loss = agg[0].metrics[0].unwrap();
        assert_eq!(loss.mean, 2.0);
        // s = sqrt(2), half width = 1.96 * sqrt(2) / sqrt(2).
        assert!((loss.ci_high.unwrap() - 3.96).abs() < 1e-12);
        let acc = agg[1].metrics[1].unwrap();
        assert_eq!((acc.mean, acc.ci_low, acc.ci_high), (0.75, Some(0.75), Some(0.75)));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        write_aggregate(&path, &agg).unwrap();
        assert_eq!(read_aggregate(&path).unwrap(), agg);
    }

    #[test]
    fn single_seed_aggregate_has_no_interval() {
        let a = vec![row(1, 1.0, None)];
        let agg = aggregate_traces("sgd", &[&a]).unwrap();
        assert_eq!(agg[0].metrics[0], Some(Summary { mean: 1.0, ci_low: None, ci_high: None }));
        assert_eq!(agg[0].metrics[1], None);
    }

    #[test]
    fn comparison_signs() {
        let das = [vec![row(1, 1.0, Some(0.9))], vec![row(1, 2.0, Some(0.8))]];
        let ams = [vec![row(1, 1.5, Some(0.7))], vec![row(1, 2.75, Some(0.7))]];
        let pairs: Vec<(&[TraceRow], &[TraceRow])> =
            das.iter().zip(&ams).map(|(d, a)| (d.as_slice(), a.as_slice())).collect();
        let rows = compare("dasgrad", "amsgrad", &pairs).unwrap();
        let loss = rows[0].loss.unwrap();
        assert!((loss.mean - 0.625).abs() < 1e-15);
        let acc = rows[0].accuracy.unwrap();
        assert!((acc.mean - 0.15).abs() < 1e-15);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cmp.csv");
        write_comparison(&path, &rows).unwrap();
        assert_eq!(read_comparison(&path).unwrap(), rows);
    }

    #[test]
    fn failures_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let f = vec![Failure { optimizer: "sgd".into(), seed: 3, message: "diverged at step 7, \"oops\"".into() }];
        write_failures(&path, &f).unwrap();
        assert_eq!(read_failures(&path).unwrap(), f);
    }
}
