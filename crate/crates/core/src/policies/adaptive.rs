use crate::allocation::{
    adaptive_weights, complete_allocation, objective_rp, optimal_value, phase3_ucb_weights, plugin_weights_or_uniform,
    tau_nonadaptive,
};
use crate::arms::RewardSource;
use crate::concentration::{delta_schedule, ConfidenceInterval, Schedule};
use crate::error::Result;

use super::{
    check_truth, phase1_length, phase2_schedule, IntervalModel, Learner, MomentLearner, PolicyConfig, PolicyTrace,
    Recorder, RegimeIntervals,
};

/// Three-phase adaptive policy with variance confidence intervals.
///
/// Phase 1 samples every arm until its variance lower bound is positive.
/// Phase 2 keeps sampling each arm up to its pessimistic share
/// `LCB_k^(q/2) / (LCB_k^(q/2) + sum_{j != k} UCB_j^(q/2))` of the horizon,
/// re-checking at geometrically spaced checkpoints and reactivating arms
/// whose share grows. Phase 3 splits the remaining budget by plug-in (or
/// upper-bound) shares.
pub fn run_adaptive<E: RewardSource>(cfg: &PolicyConfig, env: &mut E, truth: &[f64]) -> Result<PolicyTrace> {
    let model = regime_intervals(cfg);
    run_adaptive_with(cfg, env, truth, &model)
}

/// [`run_adaptive`] with caller-supplied confidence intervals.
pub fn run_adaptive_with<E: RewardSource, M: IntervalModel>(
    cfg: &PolicyConfig,
    env: &mut E,
    truth: &[f64],
    model: &M,
) -> Result<PolicyTrace> {
    let k = env.num_arms();
    cfg.validate(k)?;
    check_truth(truth, k)?;
    let start = initial_length(cfg, k)?;
    let mut out = three_phase(cfg, MomentLearner::new(env), model, truth, start)?;
    out.objective = objective_rp(&out.counts, truth, cfg.norm)?;
    out.optimal_objective = optimal_value(truth, cfg.norm, cfg.horizon);
    out.regret = out.objective - out.optimal_objective;
    Ok(out)
}

pub(super) fn regime_intervals(cfg: &PolicyConfig) -> RegimeIntervals {
    RegimeIntervals {
        regime: cfg.regime,
        delta: delta_schedule(Schedule::Adaptive, cfg.norm, cfg.horizon),
        proxy: cfg.proxy,
        tail: cfg.left_tail,
        margin: cfg.phase1_margin,
    }
}

/// First-phase starting length. With both variance bounds known the
/// uniform length that cannot overshoot any optimal count is used when it
/// is longer than the regime's default.
pub(super) fn initial_length(cfg: &PolicyConfig, k: usize) -> Result<usize> {
    let base = phase1_length(cfg.regime, cfg.proxy, cfg.horizon, k)?;
    Ok(match (cfg.lower_bound, cfg.proxy) {
        (Some(lo), Some(hi)) => base.max(tau_nonadaptive(lo, hi, k, cfg.horizon, cfg.norm.q())?.min(cfg.horizon / k)),
        _ => base,
    })
}

struct State {
    estimates: Vec<f64>,
    intervals: Vec<Option<ConfidenceInterval>>,
    good_event: bool,
}

impl State {
    fn refresh<L: Learner, M: IntervalModel>(
        &mut self,
        run: &mut Recorder<L>,
        model: &M,
        truth: &[f64],
        arm: usize,
    ) -> Result<()> {
        let n = run.learner.count(arm);
        let hat = run.learner.variance(arm)?;
        let ci = model.interval(arm, n, hat);
        if let Some(ci) = ci {
            self.good_event &= ci.contains(truth[arm]);
        }
        self.estimates[arm] = hat;
        self.intervals[arm] = ci;
        Ok(())
    }

    fn passes<M: IntervalModel, L: Learner>(&self, run: &Recorder<L>, model: &M, arm: usize) -> bool {
        model.phase1_passes(arm, run.learner.count(arm), self.estimates[arm])
    }
}

/// Shared phase machinery of the adaptive and contextual policies. Fills in
/// everything except the objective fields.
pub(super) fn three_phase<L: Learner, M: IntervalModel>(
    cfg: &PolicyConfig,
    learner: L,
    model: &M,
    truth: &[f64],
    start: usize,
) -> Result<PolicyTrace> {
    let k = learner.num_arms();
    let t = cfg.horizon;
    let cap = t / k;
    let q = cfg.norm.q();
    let mut run = Recorder::new(learner, t);
    let mut st = State { estimates: vec![0.0; k], intervals: vec![None; k], good_event: true };
    let mut truncated = false;

    // Phase 1: every arm to `start`, then one more pull per failing arm per
    // round until every lower bound is informative.
    run.fill_round_robin(&vec![start.min(cap).max(2); k])?;
    for arm in 0..k {
        st.refresh(&mut run, model, truth, arm)?;
    }
    loop {
        let failing: Vec<usize> = (0..k).filter(|&a| !st.passes(&run, model, a)).collect();
        if failing.is_empty() {
            break;
        }
        let open: Vec<usize> = failing.iter().copied().filter(|&a| run.learner.count(a) < cap).collect();
        if open.is_empty() {
            truncated = true;
            break;
        }
        for arm in open {
            run.pull(arm)?;
            st.refresh(&mut run, model, truth, arm)?;
        }
    }
    let phase1_end = run.counts();

    // Phase 2.
    let mut shares: Option<Vec<f64>> = None;
    if !truncated {
        'phase2: loop {
            let cis: Vec<ConfidenceInterval> = st.intervals.iter().map(|c| c.expect("phase 1 passed")).collect();
            let lambda = adaptive_weights(&cis, q);
            let active: Vec<usize> = (0..k).filter(|&a| (run.learner.count(a) as f64) < lambda[a] * t as f64).collect();
            if active.is_empty() {
                break;
            }
            for arm in active {
                let n = run.learner.count(arm);
                let next = phase2_schedule(n, lambda[arm] * t as f64, cfg.batch_growth);
                if run.total() + (next - n) > t {
                    truncated = true;
                    shares = Some(lambda);
                    break 'phase2;
                }
                for _ in n..next {
                    run.pull(arm)?;
                }
                st.refresh(&mut run, model, truth, arm)?;
            }
        }
    }
    let phase2_end = run.counts();

    // Phase 3.
    let weights = match shares {
        Some(w) => w,
        None if cfg.phase3_ucb && st.intervals.iter().all(Option::is_some) => {
            let ucbs: Vec<f64> = st.intervals.iter().map(|c| c.unwrap().ucb).collect();
            phase3_ucb_weights(&ucbs, q).unwrap_or_else(|_| plugin_weights_or_uniform(&st.estimates, q))
        }
        None => plugin_weights_or_uniform(&st.estimates, q),
    };
    let budget_clamped = weights.iter().zip(&phase2_end).any(|(w, &n)| n as f64 > w * t as f64);
    let counts = complete_allocation(&phase2_end, &weights, t, &st.estimates);
    run.fill_round_robin(&counts)?;

    Ok(PolicyTrace {
        phase1_end,
        phase2_end,
        estimates: run.estimates()?,
        variance_estimates: run.variances()?,
        objective: f64::NAN,
        optimal_objective: f64::NAN,
        regret: f64::NAN,
        good_event: st.good_event,
        truncated,
        budget_clamped,
        ridge_fallback: run.learner.fallback_used(),
        arm_sequence: run.sequence,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{optimal_fractions, NormOrder};
    use crate::arms::{ArmBank, ArmSpec, NoiseRegime};
    use crate::policies::PinnedIntervals;

    fn bank(vars: &[f64], seed: u64) -> ArmBank {
        ArmBank::new(vars.iter().map(|&v| ArmSpec::gaussian(0.0, v).unwrap()).collect(), seed)
    }

    #[test]
    fn pinned_intervals_reach_optimum() {
        for (norm, t, expected) in [
            (NormOrder::Infinity, 1000, vec![200, 800]),
            (NormOrder::Finite(1.0), 900, vec![300, 600]),
        ] {
            let truth = [1.0, 4.0];
            let cfg = PolicyConfig::new(t, norm, NoiseRegime::Ssg);
            let model = PinnedIntervals { variances: truth.to_vec() };
            let trace = run_adaptive_with(&cfg, &mut bank(&truth, 3), &truth, &model).unwrap();
            assert_eq!(trace.phase2_end, expected);
            assert_eq!(trace.counts, expected);
            assert!(trace.regret.abs() < 1e-12);
            assert!(trace.good_event);
            let lambda = optimal_fractions(&truth, norm);
            let cis: Vec<_> = truth.iter().map(|&v| ConfidenceInterval { lcb: v, ucb: v }).collect();
            let w = adaptive_weights(&cis, norm.q());
            for (a, b) in w.iter().zip(&lambda) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budget_and_minimum_pulls() {
        let truth = [5.0, 1.0, 2.0];
        for regime in [NoiseRegime::Ssg, NoiseRegime::GaussianExact] {
            for ucb in [false, true] {
                let cfg = PolicyConfig::new(3000, NormOrder::Infinity, regime).with_phase3_ucb(ucb);
                let tr = run_adaptive(&cfg, &mut bank(&truth, 9), &truth).unwrap();
                assert_eq!(tr.counts.iter().sum::<usize>(), 3000);
                assert!(tr.counts.iter().all(|&n| n >= 2));
                assert!(tr.regret >= -1e-12);
                for a in 0..3 {
                    assert!(tr.phase1_end[a] <= tr.phase2_end[a] && tr.phase2_end[a] <= tr.counts[a]);
                }
            }
        }
        let cfg = PolicyConfig::new(3000, NormOrder::Finite(2.0), NoiseRegime::Gsg).with_proxy(5.0);
        let tr = run_adaptive(&cfg, &mut bank(&truth, 9), &truth).unwrap();
        assert_eq!(tr.counts.iter().sum::<usize>(), 3000);
    }

    #[test]
    fn deterministic() {
        let truth = [1.0, 3.0];
        let cfg = PolicyConfig::new(5000, NormOrder::Finite(1.0), NoiseRegime::Ssg);
        let a = run_adaptive(&cfg, &mut bank(&truth, 5), &truth).unwrap();
        let b = run_adaptive(&cfg, &mut bank(&truth, 5), &truth).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn known_bounds_lengthen_phase1() {
        let truth = [1.0, 2.0, 4.0];
        let cfg = PolicyConfig::new(10_000, NormOrder::Finite(1.0), NoiseRegime::Ssg)
            .with_lower_bound(1.0)
            .with_proxy(4.0);
        let start = initial_length(&cfg, 3).unwrap();
        assert_eq!(start, 10_000 / 5);
        let tr = run_adaptive(&cfg, &mut bank(&truth, 2), &truth).unwrap();
        assert!(tr.phase1_end.iter().all(|&n| n >= start));
    }
}
