//! Trial loops and CSV output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use varalloc_core::allocation::VarianceProfile;
use varalloc_core::arms::{ArmBank, LinearBank};
use varalloc_core::policies::{run_adaptive, run_contextual, run_nonadaptive, PolicyTrace};

use crate::bounds::{bound_value, BoundCurve, BoundInputs};
use crate::config::{ExperimentConfig, PolicyKind};
use crate::error::{HarnessError, Result};
use crate::seeds::trial_seed;
use crate::slopes::{slope_estimate, spearman};

pub const COLUMNS: [&str; 15] = [
    "experiment",
    "policy",
    "regime",
    "p",
    "K",
    "T",
    "trial",
    "seed",
    "regret",
    "objective",
    "optimal_objective",
    "bound_name",
    "bound_value",
    "good_event",
    "runtime_ms",
];

/// One simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub policy: String,
    pub regime: String,
    pub p: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub trial: usize,
    pub seed: u64,
    pub regret: f64,
    pub objective: f64,
    pub optimal_objective: f64,
    pub bound_name: String,
    pub bound_value: Option<f64>,
    pub good_event: bool,
    pub runtime_ms: f64,
}

/// Per-horizon aggregate over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub trials: usize,
    pub mean_regret: f64,
    pub median_regret: f64,
    pub q10_regret: f64,
    pub q90_regret: f64,
    pub mean_bound: Option<f64>,
    pub good_event_rate: f64,
}

fn profile_for(cfg: &ExperimentConfig, truth: Vec<f64>) -> Result<VarianceProfile> {
    let mut prof = VarianceProfile::new(truth)?;
    if let Some(l) = cfg.settings.lower_bound {
        prof = prof.with_lower_bound(l)?;
    }
    if let Some(p) = cfg.settings.proxy {
        prof = prof.with_proxy(p)?;
    }
    Ok(prof)
}

/// Runs a single `(horizon, trial)` cell.
pub fn run_trial(cfg: &ExperimentConfig, curve: Option<BoundCurve>, horizon: usize, trial: usize) -> Result<Row> {
    let seed = trial_seed(cfg.seed, trial as u64);
    let pc = cfg.policy_config(horizon)?;
    let started = Instant::now();
    let (trace, profile, context): (PolicyTrace, VarianceProfile, Option<(usize, f64)>) = match cfg.policy {
        PolicyKind::NonAdaptive | PolicyKind::Adaptive => {
            let arms = cfg.arm_specs()?;
            let mut env = ArmBank::new(arms, seed);
            let truth = env.variances();
            let trace = if cfg.policy == PolicyKind::NonAdaptive {
                run_nonadaptive(&pc, &mut env, &truth)?
            } else {
                run_adaptive(&pc, &mut env, &truth)?
            };
            (trace, profile_for(cfg, truth)?, None)
        }
        PolicyKind::Contextual => {
            let spec = cfg.contextual.as_ref().ok_or_else(|| HarnessError::config("missing [contextual] section"))?;
            let inst = spec.draw(seed)?;
            let truth = inst.noise_variances();
            let lambda = inst.contexts.lambda_min();
            let d = inst.contexts.dimension();
            let mut env = LinearBank::new(inst.betas, inst.noise, inst.contexts, seed)?;
            let trace = run_contextual(&pc, &mut env, lambda, &truth)?;
            (trace, profile_for(cfg, truth)?, Some((d, lambda)))
        }
    };
    let runtime_ms = if cfg.timing { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let (bound_name, bound) = match curve {
        Some(c) => {
            let inputs = BoundInputs {
                profile: &profile,
                norm: pc.norm,
                dimension: context.map(|c| c.0),
                lambda_min_c: context.map(|c| c.1),
                phase3_ucb: pc.phase3_ucb,
            };
            (c.name().to_string(), Some(bound_value(c, &inputs, horizon as f64)?))
        }
        None => (String::new(), None),
    };
    Ok(Row {
        experiment: cfg.name.clone(),
        policy: cfg.policy.to_string(),
        regime: pc.regime.to_string(),
        p: pc.norm.to_string(),
        k: profile.num_arms(),
        t: horizon,
        trial,
        seed,
        regret: trace.regret,
        objective: trace.objective,
        optimal_objective: trace.optimal_objective,
        bound_name,
        bound_value: bound,
        good_event: trace.good_event,
        runtime_ms,
    })
}

/// All `(horizon, trial)` cells, in parallel, returned in `(T, trial)` order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.validate()?;
    let curve = cfg.bound_curve()?;
    let jobs: Vec<(usize, usize)> =
        cfg.horizons.iter().flat_map(|&t| (0..cfg.trials).map(move |i| (t, i))).collect();
    jobs.par_iter().map(|&(t, i)| run_trial(cfg, curve, t, i)).collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.experiment.clone(), r.t)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((experiment, t), rs)| {
            let n = rs.len() as f64;
            let mut reg: Vec<f64> = rs.iter().map(|r| r.regret).collect();
            reg.sort_by(f64::total_cmp);
            let bounds: Option<Vec<f64>> = rs.iter().map(|r| r.bound_value).collect();
            SummaryRow {
                experiment,
                t,
                trials: rs.len(),
                mean_regret: reg.iter().sum::<f64>() / n,
                median_regret: quantile(&reg, 0.5),
                q10_regret: quantile(&reg, 0.1),
                q90_regret: quantile(&reg, 0.9),
                mean_bound: bounds.map(|b| b.iter().sum::<f64>() / n),
                good_event_rate: rs.iter().filter(|r| r.good_event).count() as f64 / n,
            }
        })
        .collect()
}

pub fn write_rows<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

/// `<stem>.summary.csv` next to `path`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

/// Writes the per-run table and its summary; returns the summary path.
pub fn write_outputs(rows: &[Row], path: &Path) -> Result<PathBuf> {
    write_rows(rows, create(path)?)?;
    let summary = summary_path(path);
    write_summary(&summarize(rows), create(&summary)?)?;
    Ok(summary)
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(COLUMNS) {
        return Err(HarnessError::config(format!("{} does not have the result-table columns", path.display())));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Leading-term bound curve of an experiment across its horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub experiment: String,
    pub bound_name: String,
    pub p: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub bound_value: f64,
    pub note: &'static str,
}

/// Bound curve values; contextual experiments use the first trial's instance.
pub fn bound_rows(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    let curve = cfg.bound_curve()?.ok_or_else(|| HarnessError::config("bound curve disabled by `bound = \"none\"`"))?;
    let norm = cfg.norm()?;
    let (truth, context) = match cfg.policy {
        PolicyKind::Contextual => {
            let spec = cfg.contextual.as_ref().ok_or_else(|| HarnessError::config("missing [contextual] section"))?;
            let inst = spec.draw(trial_seed(cfg.seed, 0))?;
            (inst.noise_variances(), Some((inst.contexts.dimension(), inst.contexts.lambda_min())))
        }
        _ => (cfg.arm_specs()?.iter().map(|a| a.variance()).collect(), None),
    };
    let profile = profile_for(cfg, truth)?;
    let inputs = BoundInputs {
        profile: &profile,
        norm,
        dimension: context.map(|c| c.0),
        lambda_min_c: context.map(|c| c.1),
        phase3_ucb: cfg.settings.phase3_ucb,
    };
    cfg.horizons
        .iter()
        .map(|&t| {
            Ok(BoundRow {
                experiment: cfg.name.clone(),
                bound_name: curve.name().into(),
                p: norm.to_string(),
                k: profile.num_arms(),
                t,
                bound_value: bound_value(curve, &inputs, t as f64)?,
                note: "leading term only",
            })
        })
        .collect()
}

pub fn write_bounds<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

/// Fitted rate of one experiment series.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub experiment: String,
    pub policy: String,
    pub p: String,
    pub k: usize,
    pub horizons: Vec<usize>,
    pub mean_regret: Vec<f64>,
    pub slope: Result<f64, String>,
    pub spearman: Result<f64, String>,
}

/// `(experiment, policy, p, K)`.
type SeriesKey = (String, String, String, usize);

/// Slope of mean regret against `T` for each series.
pub fn slopes_from_rows(rows: &[Row]) -> Vec<SlopeReport> {
    let mut groups: BTreeMap<SeriesKey, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        let cell = groups
            .entry((r.experiment.clone(), r.policy.clone(), r.p.clone(), r.k))
            .or_default()
            .entry(r.t)
            .or_default();
        cell.0 += r.regret;
        cell.1 += 1;
    }
    groups
        .into_iter()
        .map(|((experiment, policy, p, k), by_t)| {
            let horizons: Vec<usize> = by_t.keys().copied().collect();
            let mean_regret: Vec<f64> = by_t.values().map(|(s, n)| s / *n as f64).collect();
            let pts: Vec<(f64, f64)> = horizons.iter().map(|&t| t as f64).zip(mean_regret.iter().copied()).collect();
            let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
            SlopeReport {
                slope: slope_estimate(&pts).map_err(|e| e.to_string()),
                spearman: spearman(&ts, &mean_regret).map_err(|e| e.to_string()),
                experiment,
                policy,
                p,
                k,
                horizons,
                mean_regret,
            }
        })
        .collect()
}
