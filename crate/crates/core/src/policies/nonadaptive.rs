use crate::allocation::{complete_allocation, objective_rp, optimal_value, plugin_weights_or_uniform, tau_nonadaptive};
use crate::arms::{NoiseRegime, RewardSource};
use crate::concentration::{delta_schedule, radius_gaussian, radius_gsg_with, radius_ssg_with, Schedule};
use crate::error::{Error, Result};

use super::{check_truth, MomentLearner, PolicyConfig, PolicyTrace, Recorder};

/// Uniform exploration sized by a known variance lower bound, then plug-in
/// shares.
///
/// Each arm is pulled `tau` times, where `tau` is the largest uniform
/// length that cannot exceed any arm's optimal count. The variance
/// estimates at `tau` fix the final shares; an arm whose share turns out
/// smaller than `tau` keeps its `tau` pulls and the others split the rest.
pub fn run_nonadaptive<E: RewardSource>(cfg: &PolicyConfig, env: &mut E, truth: &[f64]) -> Result<PolicyTrace> {
    let k = env.num_arms();
    cfg.validate(k)?;
    check_truth(truth, k)?;
    let lower = cfg
        .lower_bound
        .ok_or_else(|| Error::config("the non-adaptive policy needs a variance lower bound"))?;
    let proxy = cfg
        .proxy
        .ok_or_else(|| Error::config("the non-adaptive policy needs a variance upper bound"))?;
    let t = cfg.horizon;
    let q = cfg.norm.q();
    let tau = tau_nonadaptive(lower, proxy, k, t, q)?.min(t / k);

    let mut run = Recorder::new(MomentLearner::new(env), t);
    run.fill_round_robin(&vec![tau; k])?;
    let at_tau = run.variances()?;

    let delta = delta_schedule(Schedule::NonAdaptive, cfg.norm, t);
    let mut good_event = true;
    for (hat, &sigma2) in at_tau.iter().zip(truth) {
        let r = match cfg.regime {
            NoiseRegime::Gsg => radius_gsg_with(tau, delta, proxy, cfg.left_tail)?,
            NoiseRegime::Ssg => radius_ssg_with(tau, delta, sigma2, cfg.left_tail)?,
            NoiseRegime::GaussianExact => radius_gaussian(tau, delta, sigma2)?,
        };
        let dev = hat - sigma2;
        good_event &= -r.eps_minus <= dev && dev <= r.eps_plus;
    }

    let weights = plugin_weights_or_uniform(&at_tau, q);
    let budget_clamped = weights.iter().any(|w| (tau as f64) > w * t as f64);
    let committed = vec![tau; k];
    let counts = complete_allocation(&committed, &weights, t, &at_tau);
    run.fill_round_robin(&counts)?;

    let objective = objective_rp(&counts, truth, cfg.norm)?;
    let optimal_objective = optimal_value(truth, cfg.norm, t);
    Ok(PolicyTrace {
        phase1_end: committed.clone(),
        phase2_end: committed,
        estimates: run.estimates()?,
        variance_estimates: run.variances()?,
        objective,
        optimal_objective,
        regret: objective - optimal_objective,
        good_event,
        truncated: false,
        budget_clamped,
        ridge_fallback: false,
        arm_sequence: run.sequence,
        counts,
    })
}
