use std::fs;
use std::path::Path;
use std::process::Command;

fn dasgrad(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dasgrad")).args(args).current_dir(cwd).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn check_passes_on_clean_build() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = dasgrad(&["check"], dir.path());
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("ok")).count(), 5);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = dasgrad(&["run"], dir.path());
    assert_eq!(code, 2);
    assert!(stderr.contains("Usage"), "{stderr}");

    let (code, _, stderr) = dasgrad(&["run", "--config", "does-not-exist.cfg"], dir.path());
    assert_eq!(code, 2);
    assert!(stderr.contains("does-not-exist.cfg"), "{stderr}");

    assert_eq!(dasgrad(&["check", "--bogus"], dir.path()).0, 2);
    assert_eq!(dasgrad(&["frobnicate"], dir.path()).0, 2);
    assert_eq!(dasgrad(&["run", "--preset", "cifar"], dir.path()).0, 2);
    assert_eq!(dasgrad(&["--help"], dir.path()).0, 0);
}

#[test]
fn run_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.cfg"),
        "# one optimizer, one seed\nkind = centroid\nsource = synth-centroid\nn = 30\nd = 2\nsigma = 1\n\
         steps = 10\nseeds = 7\noutput = out\n[optimizer.sgd]\nalpha = 0.1\n",
    )
    .unwrap();
    let (code, stdout, stderr) = dasgrad(&["run", "--config", "exp.cfg"], dir.path());
    assert_eq!(code, 0, "{stdout}{stderr}");
    let trace = fs::read_to_string(dir.path().join("out/trace_sgd_seed7.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    assert!(trace.lines().nth(1).unwrap().starts_with("1,"));
    // Accuracy is blank for centroid problems.
    assert_eq!(trace.lines().nth(1).unwrap().split(',').nth(2), Some(""));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "kind = centroid\nsource = synth-centroid\nn = ten\n").unwrap();
    let (code, _, stderr) = dasgrad(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(code, 2);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn print_config_renders_preset() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = dasgrad(&["run", "--preset", "matching", "--print-config"], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("[optimizer.dasgrad-target]"));
    assert!(stdout.contains("weighting = target"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn sweep_variance_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) =
        dasgrad(&["sweep-variance", "--sigmas", "0.1,1,10", "--seeds", "4", "--steps", "30", "--out", "sv"], dir.path());
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(stdout.lines().count(), 3);
    let sv = dir.path().join("sv");
    let mut top: Vec<String> = fs::read_dir(&sv)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    top.sort();
    assert_eq!(top, ["aggregate_sigma_0.1.csv", "aggregate_sigma_1.csv", "aggregate_sigma_10.csv", "summary.csv"]);
    let summary = fs::read_to_string(sv.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("sigma,baseline,reference,n_pairs,"));
    let agg = dasgrad_harness::trace::read_aggregate(&sv.join("aggregate_sigma_1.csv")).unwrap();
    assert_eq!(agg.len(), 60);
    assert!(agg.iter().all(|r| r.n_seeds == 4 && r.metrics[1].is_none()));
}
