use crate::allocation::{optimal_value, regret, NormOrder};
use crate::arms::ContextualSource;
use crate::error::{Error, Result};
use crate::estimation::{gamma_schedule, RidgeState};

use super::adaptive::{initial_length, regime_intervals, three_phase};
use super::{check_truth, IntervalModel, Learner, PolicyConfig, PolicyTrace};

/// Smallest regulariser tried when a ridge system is numerically singular.
const GAMMA_FLOOR: f64 = 1e-8;

/// Ridge learner: per-arm regression with residual-based noise variance.
struct RidgeLearner<'a, E: ContextualSource> {
    env: &'a mut E,
    states: Vec<RidgeState>,
    lambda_min: f64,
    fallback: bool,
}

impl<E: ContextualSource> RidgeLearner<'_, E> {
    fn fit(&mut self, arm: usize) -> Result<Vec<f64>> {
        let s = &self.states[arm];
        let gamma = gamma_schedule(self.lambda_min, s.count());
        match s.estimate(gamma) {
            Err(Error::Singular { .. }) => {
                self.fallback = true;
                s.estimate(gamma.max(GAMMA_FLOOR))
            }
            other => other,
        }
    }
}

impl<E: ContextualSource> Learner for RidgeLearner<'_, E> {
    fn num_arms(&self) -> usize {
        self.states.len()
    }

    fn count(&self, arm: usize) -> usize {
        self.states[arm].count()
    }

    fn pull(&mut self, arm: usize) -> Result<()> {
        let (c, x) = self.env.pull(arm);
        self.states[arm].update(&c, x)
    }

    fn variance(&mut self, arm: usize) -> Result<f64> {
        let beta = self.fit(arm)?;
        self.states[arm].residual_variance(&beta)
    }

    fn estimate(&mut self, arm: usize) -> Result<Vec<f64>> {
        self.fit(arm)
    }

    fn fallback_used(&self) -> bool {
        self.fallback
    }
}

/// Adaptive policy for linear arms with i.i.d. contexts and the `p = 1`
/// objective.
///
/// The arm for a round is chosen from past observations only; the round's
/// context is revealed by the pull. Every arm is first played `d` times,
/// noise variances are estimated from ridge residuals with regulariser
/// `lambda_min / n`, and the three phases of [`run_adaptive`](super::run_adaptive)
/// follow. The reported objective is the surrogate
/// `(2d / lambda_min) sum_k sigma_k^2 / n_k`.
pub fn run_contextual<E: ContextualSource>(
    cfg: &PolicyConfig,
    env: &mut E,
    lambda_min: f64,
    truth: &[f64],
) -> Result<PolicyTrace> {
    let model = regime_intervals(cfg);
    run_contextual_with(cfg, env, lambda_min, truth, &model)
}

/// [`run_contextual`] with caller-supplied confidence intervals.
pub fn run_contextual_with<E: ContextualSource, M: IntervalModel>(
    cfg: &PolicyConfig,
    env: &mut E,
    lambda_min: f64,
    truth: &[f64],
    model: &M,
) -> Result<PolicyTrace> {
    let k = env.num_arms();
    let d = env.dimension();
    cfg.validate(k)?;
    check_truth(truth, k)?;
    if cfg.norm != NormOrder::Finite(1.0) {
        return Err(Error::config(format!("the contextual policy supports p = 1 only, got p = {}", cfg.norm)));
    }
    if !(lambda_min > 0.0 && lambda_min.is_finite()) {
        return Err(Error::config(format!("lambda_min must be positive, got {lambda_min}")));
    }
    if d * k > cfg.horizon {
        return Err(Error::config("horizon too short to play every arm d times"));
    }
    let start = initial_length(cfg, k)?.max(d);
    let learner = RidgeLearner { env, states: vec![RidgeState::new(d); k], lambda_min, fallback: false };
    let mut out = three_phase(cfg, learner, model, truth, start)?;
    let scale = 2.0 * d as f64 / lambda_min;
    out.optimal_objective = scale * optimal_value(truth, cfg.norm, cfg.horizon);
    out.regret = scale * regret(&out.counts, truth, cfg.norm)?;
    out.objective = out.optimal_objective + out.regret;
    Ok(out)
}
