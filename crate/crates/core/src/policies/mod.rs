//! Sequential allocation policies.
//!
//! All three policies spend exactly `T` pulls and return a [`PolicyTrace`].
//! They never look at the truth: the true variances passed to each runner
//! are used only to score the run (objective, regret, good event).

mod adaptive;
mod contextual;
mod nonadaptive;

pub use adaptive::{run_adaptive, run_adaptive_with};
pub use contextual::{run_contextual, run_contextual_with};
pub use nonadaptive::run_nonadaptive;

use crate::allocation::NormOrder;
use crate::arms::{NoiseRegime, RewardSource};
use crate::concentration::{
    ci_gsg, ci_ssg, factors_gaussian, factors_ssg, radius_gsg_with, ConfidenceInterval, LeftTail,
    MultiplicativeFactors,
};
use crate::error::{Error, Result};
use crate::estimation::RunningMoments;

/// Settings shared by every policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub horizon: usize,
    pub norm: NormOrder,
    pub regime: NoiseRegime,
    /// Known upper bound on every variance; the subgaussian proxy in the
    /// general regime.
    pub proxy: Option<f64>,
    /// Known lower bound on every variance.
    pub lower_bound: Option<f64>,
    /// Use upper confidence bounds instead of point estimates for the final
    /// shares of the adaptive policies.
    pub phase3_ucb: bool,
    /// Geometric growth of the checkpoints at which the second-phase
    /// stopping rule is tested.
    pub batch_growth: f64,
    /// Multiplier `m >= 1` on the radii in the first-phase stopping rule.
    pub phase1_margin: f64,
    pub left_tail: LeftTail,
}

impl PolicyConfig {
    pub fn new(horizon: usize, norm: NormOrder, regime: NoiseRegime) -> Self {
        Self {
            horizon,
            norm,
            regime,
            proxy: None,
            lower_bound: None,
            phase3_ucb: false,
            batch_growth: 2.0,
            phase1_margin: 1.0,
            left_tail: LeftTail::Refined,
        }
    }

    pub fn with_proxy(mut self, proxy: f64) -> Self {
        self.proxy = Some(proxy);
        self
    }

    pub fn with_lower_bound(mut self, lower: f64) -> Self {
        self.lower_bound = Some(lower);
        self
    }

    pub fn with_phase3_ucb(mut self, on: bool) -> Self {
        self.phase3_ucb = on;
        self
    }

    pub fn with_batch_growth(mut self, growth: f64) -> Self {
        self.batch_growth = growth;
        self
    }

    pub fn with_phase1_margin(mut self, m: f64) -> Self {
        self.phase1_margin = m;
        self
    }

    pub fn with_left_tail(mut self, tail: LeftTail) -> Self {
        self.left_tail = tail;
        self
    }

    /// Checks the settings against an instance with `k` arms.
    pub fn validate(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::config("at least one arm is required"));
        }
        if self.horizon < 2 * k {
            return Err(Error::config(format!(
                "horizon {} must be at least twice the number of arms {k}",
                self.horizon
            )));
        }
        if !(self.batch_growth > 1.0 && self.batch_growth.is_finite()) {
            return Err(Error::config(format!("batch growth must exceed 1, got {}", self.batch_growth)));
        }
        if !(self.phase1_margin >= 1.0 && self.phase1_margin.is_finite()) {
            return Err(Error::config(format!("phase-1 margin must be >= 1, got {}", self.phase1_margin)));
        }
        if let Some(p) = self.proxy {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config(format!("proxy must be positive, got {p}")));
            }
        }
        if let Some(l) = self.lower_bound {
            if !(l > 0.0) {
                return Err(Error::config(format!("lower bound must be positive, got {l}")));
            }
            if self.proxy.is_some_and(|p| l > p) {
                return Err(Error::config("lower bound exceeds proxy"));
            }
        }
        if self.regime == NoiseRegime::Gsg && self.proxy.is_none() {
            return Err(Error::config("the general subgaussian regime needs a variance proxy"));
        }
        Ok(())
    }
}

/// Record of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrace {
    /// Final pulls per arm; sums to `T`.
    pub counts: Vec<usize>,
    /// Pulls per arm when the first phase ended.
    pub phase1_end: Vec<usize>,
    /// Pulls per arm when the second phase ended (the stopping times).
    pub phase2_end: Vec<usize>,
    /// Final point estimates: `[mean]` per arm, or the coefficient vector.
    pub estimates: Vec<Vec<f64>>,
    /// Final variance estimates over all of each arm's observations.
    pub variance_estimates: Vec<f64>,
    pub objective: f64,
    pub optimal_objective: f64,
    pub regret: f64,
    /// Every confidence statement the policy relied on held for the truth.
    pub good_event: bool,
    /// The first or second phase ran out of budget.
    pub truncated: bool,
    /// Some arm was already past its final share when shares were fixed.
    pub budget_clamped: bool,
    /// A ridge solve needed the regulariser floor.
    pub ridge_fallback: bool,
    /// Arm pulled at each round.
    pub arm_sequence: Vec<usize>,
}

/// Initial per-arm length of the adaptive first phase:
/// `min(64 s^4 ln T, T/K)` for general subgaussian noise and
/// `min(18 ln T, T/K)` otherwise, rounded up and at least 2.
pub fn phase1_length(regime: NoiseRegime, proxy: Option<f64>, horizon: usize, k: usize) -> Result<usize> {
    let log_t = (horizon as f64).ln();
    let raw = match regime {
        NoiseRegime::Gsg => {
            let s2 = proxy.ok_or_else(|| Error::config("the general subgaussian regime needs a variance proxy"))?;
            64.0 * s2 * s2 * log_t
        }
        NoiseRegime::Ssg | NoiseRegime::GaussianExact => 18.0 * log_t,
    };
    let cap = horizon / k.max(1);
    Ok((raw.ceil() as usize).min(cap).max(2))
}

/// Next checkpoint `min(ceil(target), max(n + 1, ceil(n * growth)))`.
pub fn phase2_schedule(current: usize, target: f64, growth: f64) -> usize {
    let grown = ((current as f64) * growth).ceil() as usize;
    let cap = target.ceil().max(0.0) as usize;
    cap.min(grown.max(current + 1))
}

/// Confidence intervals for the variance of each arm.
pub trait IntervalModel {
    /// Interval for arm `arm` after `n` pulls with estimate `sigma_sq_hat`,
    /// or `None` while no finite interval is available.
    fn interval(&self, arm: usize, n: usize, sigma_sq_hat: f64) -> Option<ConfidenceInterval>;

    /// First-phase stopping rule: the lower bound is informative.
    fn phase1_passes(&self, arm: usize, n: usize, sigma_sq_hat: f64) -> bool {
        self.interval(arm, n, sigma_sq_hat).is_some_and(|ci| ci.lcb > 0.0)
    }
}

/// Intervals derived from the concentration radii of a noise regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeIntervals {
    pub regime: NoiseRegime,
    pub delta: f64,
    pub proxy: Option<f64>,
    pub tail: LeftTail,
    pub margin: f64,
}

impl RegimeIntervals {
    fn factors(&self, n: usize) -> Option<MultiplicativeFactors> {
        match self.regime {
            NoiseRegime::Gsg => None,
            NoiseRegime::Ssg => factors_ssg(n, self.delta, self.tail).ok(),
            NoiseRegime::GaussianExact => factors_gaussian(n, self.delta).ok(),
        }
    }
}

impl IntervalModel for RegimeIntervals {
    fn interval(&self, _arm: usize, n: usize, sigma_sq_hat: f64) -> Option<ConfidenceInterval> {
        match self.regime {
            NoiseRegime::Gsg => {
                let r = radius_gsg_with(n, self.delta, self.proxy?, self.tail).ok()?;
                Some(ci_gsg(sigma_sq_hat, r))
            }
            _ => ci_ssg(sigma_sq_hat, self.factors(n)?).ok(),
        }
    }

    fn phase1_passes(&self, _arm: usize, n: usize, sigma_sq_hat: f64) -> bool {
        let m = self.margin;
        match self.regime {
            NoiseRegime::Gsg => match self.proxy.and_then(|p| radius_gsg_with(n, self.delta, p, self.tail).ok()) {
                Some(r) => sigma_sq_hat - m * r.eps_plus > 0.0,
                None => false,
            },
            _ => match self.factors(n) {
                Some(s) => m * s.s_minus < 1.0 && sigma_sq_hat / (1.0 + m * s.s_plus) > 0.0,
                None => false,
            },
        }
    }
}

/// Zero-width intervals at fixed values, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedIntervals {
    pub variances: Vec<f64>,
}

impl IntervalModel for PinnedIntervals {
    fn interval(&self, arm: usize, _n: usize, _sigma_sq_hat: f64) -> Option<ConfidenceInterval> {
        let v = self.variances[arm];
        Some(ConfidenceInterval { lcb: v, ucb: v })
    }
}

/// Per-arm estimator driven by a policy.
pub(crate) trait Learner {
    fn num_arms(&self) -> usize;
    fn count(&self, arm: usize) -> usize;
    fn pull(&mut self, arm: usize) -> Result<()>;
    fn variance(&mut self, arm: usize) -> Result<f64>;
    fn estimate(&mut self, arm: usize) -> Result<Vec<f64>>;
    fn fallback_used(&self) -> bool {
        false
    }
}

/// Sample-mean learner over a canonical environment.
pub(crate) struct MomentLearner<'a, E: RewardSource> {
    env: &'a mut E,
    moments: Vec<RunningMoments>,
}

impl<'a, E: RewardSource> MomentLearner<'a, E> {
    pub(crate) fn new(env: &'a mut E) -> Self {
        let k = env.num_arms();
        Self { env, moments: vec![RunningMoments::new(); k] }
    }
}

impl<E: RewardSource> Learner for MomentLearner<'_, E> {
    fn num_arms(&self) -> usize {
        self.moments.len()
    }

    fn count(&self, arm: usize) -> usize {
        self.moments[arm].count()
    }

    fn pull(&mut self, arm: usize) -> Result<()> {
        let x = self.env.pull(arm);
        self.moments[arm].push(x);
        Ok(())
    }

    fn variance(&mut self, arm: usize) -> Result<f64> {
        self.moments[arm].sample_variance()
    }

    fn estimate(&mut self, arm: usize) -> Result<Vec<f64>> {
        Ok(vec![self.moments[arm].mean()])
    }
}

/// Learner wrapper that records the pull sequence.
pub(crate) struct Recorder<L: Learner> {
    pub(crate) learner: L,
    pub(crate) sequence: Vec<usize>,
}

impl<L: Learner> Recorder<L> {
    pub(crate) fn new(learner: L, horizon: usize) -> Self {
        Self { learner, sequence: Vec::with_capacity(horizon) }
    }

    pub(crate) fn pull(&mut self, arm: usize) -> Result<()> {
        self.sequence.push(arm);
        self.learner.pull(arm)
    }

    pub(crate) fn counts(&self) -> Vec<usize> {
        (0..self.learner.num_arms()).map(|k| self.learner.count(k)).collect()
    }

    pub(crate) fn total(&self) -> usize {
        self.sequence.len()
    }

    /// Pulls each arm until it has `targets[k]` observations, one round of
    /// all lagging arms at a time.
    pub(crate) fn fill_round_robin(&mut self, targets: &[usize]) -> Result<()> {
        loop {
            let mut any = false;
            for (k, &t) in targets.iter().enumerate() {
                if self.learner.count(k) < t {
                    self.pull(k)?;
                    any = true;
                }
            }
            if !any {
                return Ok(());
            }
        }
    }

    pub(crate) fn variances(&mut self) -> Result<Vec<f64>> {
        (0..self.learner.num_arms()).map(|k| self.learner.variance(k)).collect()
    }

    pub(crate) fn estimates(&mut self) -> Result<Vec<Vec<f64>>> {
        (0..self.learner.num_arms()).map(|k| self.learner.estimate(k)).collect()
    }
}

/// Truth used to score a run.
pub(crate) fn check_truth(truth: &[f64], k: usize) -> Result<()> {
    if truth.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: truth.len() });
    }
    Ok(())
}
