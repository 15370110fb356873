use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use varalloc_core::allocation::{objective_rp, optimal_allocation, NormOrder, VarianceProfile};
use varalloc_harness::config::ExperimentConfig;
use varalloc_harness::error::HarnessError;
use varalloc_harness::experiment::{bound_rows, read_rows, run_experiment, slopes_from_rows, summarize, write_bounds, write_outputs};
use varalloc_harness::oracle::oracle_best_allocation;
use varalloc_harness::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "varalloc", version, about = "Budget allocation experiments for multi-group mean estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-trial and summary CSV files.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated horizon grid.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Record wall-clock runtime per trial (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate the leading-term bound curve of an experiment.
    Bounds {
        config: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Exhaustive best integer allocation for a small instance.
    Oracle {
        /// Comma-separated variances, e.g. `1,2,4`.
        #[arg(value_delimiter = ',', required = true)]
        profile: Vec<f64>,
        #[arg(long, short = 'T')]
        horizon: usize,
        /// Norm order: a number >= 1 or `inf`.
        #[arg(long, short, default_value = "inf")]
        p: String,
    },
    /// Fit log-log regret slopes from a result CSV.
    Slopes { csv: PathBuf },
    /// Run the randomised invariant suite.
    Selftest {
        #[arg(long, default_value_t = 1000)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn simulate(
    path: PathBuf,
    trials: Option<usize>,
    seed: Option<u64>,
    horizons: Option<Vec<usize>>,
    output: Option<PathBuf>,
    timing: bool,
    threads: Option<usize>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&path)?.with_overrides(trials, seed, horizons, output)?;
    cfg.timing |= timing;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.name)));
    let rows = run_experiment(&cfg)?;
    let summary = write_outputs(&rows, &out)?;
    println!("{:>8} {:>6} {:>12} {:>12} {:>12} {:>6}", "T", "trials", "mean", "median", "bound", "good");
    for s in summarize(&rows) {
        let bound = s.mean_bound.map_or_else(|| "-".to_string(), |b| format!("{b:.4e}"));
        println!(
            "{:>8} {:>6} {:>12.4e} {:>12.4e} {:>12} {:>6.2}",
            s.t, s.trials, s.mean_regret, s.median_regret, bound, s.good_event_rate
        );
    }
    eprintln!("wrote {} and {}", out.display(), summary.display());
    Ok(())
}

fn bounds(path: PathBuf, output: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(&path)?;
    let rows = bound_rows(&cfg)?;
    match output {
        Some(p) => {
            let f = std::fs::File::create(&p).map_err(|e| HarnessError::Io { path: p.clone(), source: e })?;
            write_bounds(&rows, f)?;
        }
        None => write_bounds(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn oracle(profile: Vec<f64>, horizon: usize, p: &str) -> Result<()> {
    let norm: NormOrder = p.parse().map_err(HarnessError::from)?;
    let best = oracle_best_allocation(&profile, norm, horizon)?;
    let prof = VarianceProfile::new(profile.clone()).map_err(HarnessError::from)?;
    let plan = optimal_allocation(&prof, norm, horizon).map_err(HarnessError::from)?;
    let best_value = objective_rp(&best, &profile, norm).map_err(HarnessError::from)?;
    let plan_value = objective_rp(&plan.counts, &profile, norm).map_err(HarnessError::from)?;
    let mut out = io::stdout().lock();
    writeln!(out, "exhaustive  {best:?}  R_p = {best_value:.6e}")?;
    writeln!(out, "rounded     {:?}  R_p = {plan_value:.6e}", plan.counts)?;
    writeln!(out, "relative gap {:.4}%", 100.0 * (plan_value - best_value) / best_value)?;
    Ok(())
}

fn slopes(path: PathBuf) -> Result<()> {
    let rows = read_rows(&path)?;
    let mut out = io::stdout().lock();
    for r in slopes_from_rows(&rows) {
        let slope = r.slope.map_or_else(|e| format!("n/a ({e})"), |s| format!("{s:.4}"));
        let rho = r.spearman.map_or_else(|_| "n/a".to_string(), |s| format!("{s:.3}"));
        writeln!(out, "{} {} p={} K={}: slope {slope}, spearman {rho}", r.experiment, r.policy, r.p, r.k)?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return h.exit_code();
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return 3;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, trials, seed, horizons, output, timing, threads } => {
            simulate(config, trials, seed, horizons, output, timing, threads)
        }
        Command::Bounds { config, output } => bounds(config, output),
        Command::Oracle { profile, horizon, p } => oracle(profile, horizon, &p),
        Command::Slopes { csv } => slopes(csv),
        Command::Selftest { configs, seed } => {
            let report = run_selftest(configs, seed);
            println!("{report}");
            for f in report.failures.iter().take(20) {
                println!("  {f}");
            }
            return if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(4) };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
