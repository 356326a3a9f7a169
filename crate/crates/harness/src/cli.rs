//! Command-line interface. Exit codes: 0 success, 1 failed run or check,
//! 2 usage error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};

use crate::check;
use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiment::{run_experiment, sweep_variance};
use crate::presets;

#[derive(Debug, Parser)]
#[command(name = "dasgrad", version, about = "Double adaptive stochastic gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from a config file or a named preset.
    Run {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// One of: dense-logistic, sparse-logistic, centroid-sweep, matching.
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the normalized config and exit without running.
        #[arg(long)]
        print_config: bool,
    },
    /// Online centroid learning across feature spreads.
    SweepVariance {
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = presets::CENTROID_ALPHA)]
        alpha: f64,
        #[arg(long, default_value = "out/sweep-variance")]
        out: PathBuf,
    },
    /// Unbalanced training set, target-weighted against unweighted DASGrad.
    Matching {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        keep_fraction: f64,
        #[arg(long, default_value = "out/matching")]
        out: PathBuf,
    },
    /// Gradient checks, sampler law, unbiasedness and variance identities.
    Check,
}

fn usage_error(message: &str) -> i32 {
    eprintln!("error: {message}\n");
    let _ = Cli::command().print_help();
    2
}

fn failed(e: HarnessError) -> i32 {
    eprintln!("error: {e}");
    1
}

fn run_config(config: ExperimentConfig) -> i32 {
    match run_experiment(&config) {
        Ok(out) => {
            println!("wrote {} runs to {}", out.runs.len(), out.output.display());
            for f in &out.failures {
                eprintln!("failed: {} seed {}: {}", f.optimizer, f.seed, f.message);
            }
            for row in out.comparison.iter().filter(|r| r.step == config.steps - config.steps % config.metric_tick) {
                if let Some(l) = row.loss {
                    println!(
                        "{} vs {} at step {}: loss improvement {:.6} [{:.6}, {:.6}]",
                        row.reference, row.baseline, row.step, l.mean, l.paired_low, l.paired_high
                    );
                }
                if let Some(a) = row.accuracy {
                    println!(
                        "{} vs {} at step {}: accuracy improvement {:.6} [{:.6}, {:.6}]",
                        row.reference, row.baseline, row.step, a.mean, a.paired_low, a.paired_high
                    );
                }
            }
            if out.failures.is_empty() {
                0
            } else {
                1
            }
        }
        Err(e) => failed(e),
    }
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, preset, out, print_config } => {
            let loaded = match (config, preset) {
                (Some(path), _) => match ExperimentConfig::from_file(&path) {
                    Ok(c) => c,
                    Err(e) => return usage_error(&e.to_string()),
                },
                (None, Some(name)) => match presets::by_name(&name, &PathBuf::from("out").join(&name)) {
                    Some(c) => c,
                    None => return usage_error(&format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", "))),
                },
                (None, None) => return usage_error("one of --config or --preset is required"),
            };
            let mut config = loaded;
            if let Some(out) = out {
                config.output = out;
            }
            if print_config {
                print!("{}", config.render());
                return 0;
            }
            run_config(config)
        }
        Command::SweepVariance { sigmas, seeds, steps, alpha, out } => {
            if seeds < 2 || steps == 0 {
                return usage_error("--seeds must be at least 2 and --steps positive");
            }
            let mut sweep = presets::centroid_sweep(&sigmas, &out, seeds);
            sweep.base.steps = steps;
            for o in &mut sweep.base.optimizers {
                o.config.alpha = alpha;
            }
            if let Err(e) = sweep.base.validate() {
                return usage_error(&e.to_string());
            }
            match sweep_variance(&sweep) {
                Ok(rows) => {
                    for r in rows {
                        println!(
                            "sigma {}: {} - {} final cumulative regret gap {:.6} [{:.6}, {:.6}]",
                            r.sigma, r.baseline, r.reference, r.gap_mean, r.gap_paired.0, r.gap_paired.1
                        );
                    }
                    0
                }
                Err(e) => failed(e),
            }
        }
        Command::Matching { seeds, steps, keep_fraction, out } => {
            let mut config = presets::matching(&out, seeds);
            config.steps = steps;
            if let Some(u) = &mut config.problem.unbalance {
                u.keep_fraction = keep_fraction;
            }
            if let Err(e) = config.validate() {
                return usage_error(&e.to_string());
            }
            run_config(config)
        }
        Command::Check => {
            let mut ok = true;
            for r in check::run_all() {
                println!("{} {}: {}", if r.passed { "ok    " } else { "FAILED" }, r.name, r.detail);
                ok &= r.passed;
            }
            i32::from(!ok)
        }
    }
}
