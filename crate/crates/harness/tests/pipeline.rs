use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use dasgrad_core::metrics::{aggregate_runs, mean_interval};
use dasgrad_harness::config::ExperimentConfig;
use dasgrad_harness::dataset::{load_dense_csv, load_sparse, synth_classification, write_dense_csv, write_sparse};
use dasgrad_harness::experiment::{aggregate_file_name, run_experiment, trace_file_name};
use dasgrad_harness::trace::{read_aggregate, read_comparison, read_trace, TraceRow, METRICS};

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "kind = multiclass\nsource = synth-classification\nn = 120\nd = 6\nk = 3\nmargin = 2.5\nlambda = 1e-3\n\
         intercept = true\nsteps = 60\nseeds = 0..4\nmetric_tick = 10\noutput = {}\n\
         [optimizer.adam]\n[optimizer.amsgrad]\n[optimizer.dasgrad]\nrefresh = 5\n",
        out.display()
    ))
    .unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_experiment(&config(&out)).unwrap();
    let first = snapshot(&out);
    fs::remove_dir_all(&out).unwrap();
    run_experiment(&config(&out)).unwrap();
    let second = snapshot(&out);
    assert_eq!(first.len(), 3 * 4 + 3 + 4);
    assert_eq!(first, second);
}

#[test]
fn aggregates_and_comparison_recompute_from_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run_experiment(&cfg).unwrap();
    let traces: BTreeMap<(&str, u64), Vec<TraceRow>> = ["adam", "amsgrad", "dasgrad"]
        .iter()
        .flat_map(|o| cfg.seeds.iter().map(move |s| (*o, *s)))
        .map(|(o, s)| ((o, s), read_trace(&dir.path().join(trace_file_name(o, s))).unwrap()))
        .collect();

    for opt in ["adam", "amsgrad", "dasgrad"] {
        let agg = read_aggregate(&dir.path().join(aggregate_file_name(opt))).unwrap();
        for (k, _) in METRICS.iter().enumerate() {
            let per_seed: Vec<Vec<(usize, f64)>> = cfg
                .seeds
                .iter()
                .map(|s| traces[&(opt, *s)].iter().map(|r| (r.step, r.metric(k).unwrap())).collect())
                .collect();
            let direct = aggregate_runs(&per_seed).unwrap();
            for (row, (t, mean, lo, hi, n)) in agg.iter().zip(direct.per_tick) {
                let m = row.metrics[k].unwrap();
                assert_eq!((row.step, row.n_seeds), (t, n));
                assert!((m.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
                assert!((m.ci_low.unwrap() - lo).abs() <= 1e-12 * lo.abs().max(1.0));
                assert!((m.ci_high.unwrap() - hi).abs() <= 1e-12 * hi.abs().max(1.0));
            }
        }
    }

    let cmp = read_comparison(&dir.path().join("comparison.csv")).unwrap();
    assert_eq!(cmp.len(), 2 * 6);
    for row in &cmp {
        assert_eq!(row.reference, "dasgrad");
        let j = row.step / 10 - 1;
        let mean_of = |opt: &str, f: &dyn Fn(&TraceRow) -> f64| {
            cfg.seeds.iter().map(|s| f(&traces[&(opt, *s)][j])).sum::<f64>() / cfg.seeds.len() as f64
        };
        let loss_gap = mean_of(&row.baseline, &|r| r.loss) - mean_of("dasgrad", &|r| r.loss);
        let acc_gap = mean_of("dasgrad", &|r| r.accuracy.unwrap()) - mean_of(&row.baseline, &|r| r.accuracy.unwrap());
        assert!((row.loss.unwrap().mean - loss_gap).abs() < 1e-12);
        assert!((row.accuracy.unwrap().mean - acc_gap).abs() < 1e-12);
        let diffs: Vec<f64> =
            cfg.seeds.iter().map(|s| traces[&(row.baseline.as_str(), *s)][j].loss - traces[&("dasgrad", *s)][j].loss).collect();
        let paired = mean_interval(&diffs).unwrap();
        assert!((row.loss.unwrap().paired_low - paired.ci_low).abs() < 1e-12);
    }
}

#[test]
fn dataset_files_round_trip_through_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_classification(50, 8, 2, 3.0, 0.6, 11);
    let dense = dir.path().join("train.csv");
    let sparse = dir.path().join("train.svm");
    write_dense_csv(&ds, &dense).unwrap();
    write_sparse(&ds, &sparse).unwrap();
    let a = load_dense_csv(&dense).unwrap();
    let b = load_sparse(&sparse).unwrap();
    for ((x, y), z) in a.examples.iter().zip(&b.examples).zip(&ds.examples) {
        assert_eq!(x.features.to_dense(), z.features.to_dense());
        assert_eq!(y.features.to_dense(), z.features.to_dense());
    }

    let mut outs = Vec::new();
    for (source, path) in [("dense-csv", &dense), ("sparse", &sparse)] {
        let out = dir.path().join(source);
        let cfg = ExperimentConfig::parse(&format!(
            "kind = binary\nsource = {source}\npath = {}\nlambda = 0.01\nsteps = 20\nseeds = 1,2\nmetric_tick = 5\n\
             output = {}\n[optimizer.dasgrad]\n",
            path.display(),
            out.display()
        ))
        .unwrap();
        run_experiment(&cfg).unwrap();
        outs.push(read_trace(&out.join(trace_file_name("dasgrad", 2))).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}
