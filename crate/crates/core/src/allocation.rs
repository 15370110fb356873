//! Closed-form allocation mathematics.
//!
//! For the objective `R_p(n) = || (sigma_k^2 / n_k)_k ||_p` the optimal real
//! allocation is `n_k* = sigma_k^q / Sigma_q * T` with `q = 2p / (p + 1)`
//! (`q = 2` for `p = inf`) and `Sigma_q = sum_j sigma_j^q`. Its value is
//! `(Sigma_q)^(2/q) / T`.

use std::fmt;
use std::str::FromStr;

use crate::concentration::ConfidenceInterval;
use crate::error::{Error, Result};

/// Slack added before flooring so that exact products such as `0.2 * 10`
/// are not lost to round-off.
const FLOOR_GUARD: f64 = 1e-9;

/// Order `p >= 1` of the norm in the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(NormOrder::Finite(p))
        } else if p == f64::INFINITY {
            Ok(NormOrder::Infinity)
        } else {
            Err(Error::config(format!("norm order must be >= 1, got {p}")))
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, NormOrder::Infinity)
    }

    pub fn q(&self) -> f64 {
        q_of_p(*self)
    }

    /// `p` as a float, `inf` for the max-norm.
    pub fn value(&self) -> f64 {
        match self {
            NormOrder::Finite(p) => *p,
            NormOrder::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(NormOrder::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::config(format!("cannot parse norm order `{s}`")))?;
                NormOrder::finite(p)
            }
        }
    }
}

pub fn q_of_p(p: NormOrder) -> f64 {
    match p {
        NormOrder::Finite(p) => 2.0 * p / (p + 1.0),
        NormOrder::Infinity => 2.0,
    }
}

/// True group variances plus the optional side information some policies
/// and bounds need.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    variances: Vec<f64>,
    lower_bound: Option<f64>,
    proxy: Option<f64>,
}

impl VarianceProfile {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::config("variance profile is empty"));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::config(format!("variances must be finite and positive, got {v}")));
        }
        Ok(Self { variances, lower_bound: None, proxy: None })
    }

    pub fn with_lower_bound(mut self, lower: f64) -> Result<Self> {
        if !(lower > 0.0 && lower <= self.min_variance()) {
            return Err(Error::config(format!(
                "lower bound {lower} must be positive and at most the smallest variance {}",
                self.min_variance()
            )));
        }
        self.lower_bound = Some(lower);
        Ok(self)
    }

    pub fn with_proxy(mut self, proxy: f64) -> Result<Self> {
        if !(proxy.is_finite() && proxy >= self.max_variance()) {
            return Err(Error::config(format!(
                "variance proxy {proxy} must be at least the largest variance {}",
                self.max_variance()
            )));
        }
        self.proxy = Some(proxy);
        Ok(self)
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn num_arms(&self) -> usize {
        self.variances.len()
    }

    pub fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }

    pub fn proxy(&self) -> Option<f64> {
        self.proxy
    }

    pub fn min_variance(&self) -> f64 {
        self.variances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_variance(&self) -> f64 {
        self.variances.iter().copied().fold(0.0, f64::max)
    }

    /// `sum_k sigma_k^a`, the exponent applying to the standard deviation.
    pub fn power_sum(&self, a: f64) -> f64 {
        self.variances.iter().map(|v| v.powf(a / 2.0)).sum()
    }
}

/// Intended fractions and the integer counts realising them.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub fractions: Vec<f64>,
    pub counts: Vec<usize>,
    pub horizon: usize,
}

/// `lambda_k* = sigma_k^q / Sigma_q`.
pub fn optimal_fractions(variances: &[f64], p: NormOrder) -> Vec<f64> {
    let q = q_of_p(p);
    let w: Vec<f64> = variances.iter().map(|v| v.powf(q / 2.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Optimal fractions and their rounded counts. The residual left by the
/// floors goes to the largest fractional parts, which yields the integer
/// vector closest to `lambda* T`.
pub fn optimal_allocation(profile: &VarianceProfile, p: NormOrder, horizon: usize) -> Result<AllocationPlan> {
    let k = profile.num_arms();
    if horizon < k {
        return Err(Error::config(format!("horizon {horizon} is smaller than the number of arms {k}")));
    }
    let fractions = optimal_fractions(profile.variances(), p);
    let t = horizon as f64;
    let remainders: Vec<f64> = fractions.iter().map(|l| l * t + FLOOR_GUARD - (l * t + FLOOR_GUARD).floor()).collect();
    let counts = round_allocation(&fractions, horizon, &remainders);
    Ok(AllocationPlan { fractions, counts, horizon })
}

/// `R_p(n*) = (Sigma_q)^(2/q) / T`.
pub fn optimal_value(variances: &[f64], p: NormOrder, horizon: usize) -> f64 {
    let q = q_of_p(p);
    let sq: f64 = variances.iter().map(|v| v.powf(q / 2.0)).sum();
    sq.powf(2.0 / q) / horizon as f64
}

/// `|| (sigma_k^2 / n_k)_k ||_p`.
pub fn objective_rp(counts: &[usize], variances: &[f64], p: NormOrder) -> Result<f64> {
    if counts.len() != variances.len() {
        return Err(Error::DimensionMismatch { expected: variances.len(), got: counts.len() });
    }
    if let Some(arm) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ZeroCount { arm });
    }
    let terms = counts.iter().zip(variances).map(|(&n, v)| v / n as f64);
    Ok(match p {
        NormOrder::Infinity => terms.fold(0.0, f64::max),
        NormOrder::Finite(p) => terms.map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p),
    })
}

/// Objective gap to the real-valued optimum at `T = sum counts`.
pub fn regret(counts: &[usize], variances: &[f64], p: NormOrder) -> Result<f64> {
    let t: usize = counts.iter().sum();
    Ok(objective_rp(counts, variances, p)? - optimal_value(variances, p, t))
}

/// Normalised `(sigma_hat^2)^(q/2)`.
pub fn plugin_weights(estimates: &[f64], q: f64) -> Result<Vec<f64>> {
    if estimates.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Degenerate("variance estimates must be finite and nonnegative".into()));
    }
    let w: Vec<f64> = estimates.iter().map(|v| v.powf(q / 2.0)).collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all variance estimates are zero".into()));
    }
    Ok(w.iter().map(|x| x / total).collect())
}

/// [`plugin_weights`], or uniform weights when every estimate is zero.
pub fn plugin_weights_or_uniform(estimates: &[f64], q: f64) -> Vec<f64> {
    plugin_weights(estimates, q).unwrap_or_else(|_| vec![1.0 / estimates.len() as f64; estimates.len()])
}

/// Pessimistic share of arm `k`:
/// `LCB_k^(q/2) / (LCB_k^(q/2) + sum_{j != k} UCB_j^(q/2))`.
pub fn adaptive_weight(lcb: f64, ucb_others: &[f64], q: f64) -> f64 {
    let own = lcb.max(0.0).powf(q / 2.0);
    let rest: f64 = ucb_others.iter().map(|u| u.powf(q / 2.0)).sum();
    if own + rest > 0.0 {
        own / (own + rest)
    } else {
        0.0
    }
}

/// [`adaptive_weight`] for every arm at once.
pub fn adaptive_weights(intervals: &[ConfidenceInterval], q: f64) -> Vec<f64> {
    (0..intervals.len())
        .map(|k| {
            let others: Vec<f64> = intervals
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, ci)| ci.ucb)
                .collect();
            adaptive_weight(intervals[k].lcb, &others, q)
        })
        .collect()
}

/// Normalised `UCB^(q/2)`.
pub fn phase3_ucb_weights(ucbs: &[f64], q: f64) -> Result<Vec<f64>> {
    plugin_weights(ucbs, q)
}

/// Length of the uniform first phase of the non-adaptive policy,
/// `sl^q / (sl^q + (K-1) s^q) * T`, floored and clamped to `[2, T-K+1]`.
pub fn tau_nonadaptive(lower_bound: f64, proxy: f64, k: usize, horizon: usize, q: f64) -> Result<usize> {
    if !(lower_bound > 0.0) {
        return Err(Error::config("variance lower bound must be positive"));
    }
    if lower_bound > proxy {
        return Err(Error::config(format!("lower bound {lower_bound} exceeds proxy {proxy}")));
    }
    if k == 0 || horizon < k {
        return Err(Error::config(format!("need 1 <= K <= T, got K = {k}, T = {horizon}")));
    }
    let lo = lower_bound.powf(q / 2.0);
    let hi = proxy.powf(q / 2.0);
    let share = lo / (lo + (k - 1) as f64 * hi);
    let tau = (share * horizon as f64 + FLOOR_GUARD).floor() as usize;
    Ok(tau.clamp(2, (horizon + 1 - k).max(2)))
}

/// Arm indices ordered by decreasing priority, ties to the lower index.
fn priority_order(priority: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..priority.len()).collect();
    idx.sort_by(|&a, &b| priority[b].total_cmp(&priority[a]).then(a.cmp(&b)));
    idx
}

/// Integer counts `floor(lambda_k T)` plus a greedy top-up of the residual,
/// one round at a time in decreasing priority.
pub fn round_allocation(fractions: &[f64], horizon: usize, priority: &[f64]) -> Vec<usize> {
    let t = horizon as f64;
    let mut counts: Vec<usize> = fractions
        .iter()
        .map(|l| (l.max(0.0) * t + FLOOR_GUARD).floor() as usize)
        .collect();
    top_up(&mut counts, horizon, priority);
    counts
}

/// Bring `sum counts` to exactly `horizon` by cycling through the arms in
/// priority order.
fn top_up(counts: &mut [usize], horizon: usize, priority: &[f64]) {
    let order = priority_order(priority);
    let mut total: usize = counts.iter().sum();
    while total > horizon {
        // Only reachable when fractions overshoot 1; trim the lowest priority.
        if let Some(&k) = order.iter().rev().find(|&&k| counts[k] > 0) {
            counts[k] -= 1;
            total -= 1;
        }
    }
    let mut i = 0;
    while total < horizon {
        counts[order[i % order.len()]] += 1;
        total += 1;
        i += 1;
    }
}

/// Final counts honouring pulls already spent.
///
/// Arms whose committed count already meets `lambda_k T` keep exactly that
/// count. The remaining budget is shared by the other arms in proportion to
/// their renormalised fractions, repeated until no arm is over its target,
/// and the integer residual is topped up by priority. Returns counts that
/// dominate `committed` and sum to `horizon`.
pub fn complete_allocation(committed: &[usize], fractions: &[f64], horizon: usize, priority: &[f64]) -> Vec<usize> {
    let k = committed.len();
    let spent: usize = committed.iter().sum();
    assert!(spent <= horizon, "committed pulls exceed the horizon");
    let total_frac: f64 = fractions.iter().map(|l| l.max(0.0)).sum();
    let lambda: Vec<f64> = if total_frac > 0.0 {
        fractions.iter().map(|l| l.max(0.0) / total_frac).collect()
    } else {
        vec![1.0 / k as f64; k]
    };

    let mut fixed = vec![false; k];
    loop {
        let budget = horizon - (0..k).filter(|&j| fixed[j]).map(|j| committed[j]).sum::<usize>();
        let mass: f64 = (0..k).filter(|&j| !fixed[j]).map(|j| lambda[j]).sum();
        let mut changed = false;
        for j in 0..k {
            if fixed[j] {
                continue;
            }
            let target = if mass > 0.0 { lambda[j] / mass * budget as f64 } else { 0.0 };
            if committed[j] as f64 >= target {
                fixed[j] = true;
                changed = true;
            }
        }
        if !changed {
            let mut counts = committed.to_vec();
            for j in 0..k {
                if !fixed[j] {
                    let target = lambda[j] / mass * budget as f64;
                    counts[j] = ((target + FLOOR_GUARD).floor() as usize).max(committed[j]);
                }
            }
            top_up(&mut counts, horizon, priority);
            return counts;
        }
    }
}
