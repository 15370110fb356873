//! Leading terms of the regret upper bounds.
//!
//! Each curve is `C * T^a * (ln T)^b` where `C` depends on the variance
//! profile. Only the leading term is evaluated; lower-order remainders are
//! dropped. Notation: `Sigma_a = sum_k sigma_k^a`, `s2` is the known upper
//! variance bound, `sl2` the known lower bound and
//! `lambda = sl^q / (sl^q + (K-1) s^q)`.

use std::fmt;
use std::str::FromStr;

use varalloc_core::allocation::{NormOrder, VarianceProfile};
use varalloc_core::arms::NoiseRegime;

use crate::config::PolicyKind;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundCurve {
    /// Non-adaptive, general subgaussian, `p = inf`.
    T1Inf,
    /// Non-adaptive, general subgaussian, finite `p`.
    T2Finite,
    /// Adaptive, general subgaussian, `p = inf`.
    T3Inf,
    /// Adaptive, general subgaussian, finite `p`.
    T3Finite,
    /// Contextual, general subgaussian, `p = 1`.
    T5Contextual,
    /// Non-adaptive, strictly subgaussian, any `p`.
    T6SsgNonadaptive,
    /// Adaptive, strictly subgaussian, `p = inf`.
    T7SsgAdaptiveInf,
    /// Adaptive, strictly subgaussian, finite `p`.
    T7SsgAdaptiveFinite,
    /// Contextual, strictly subgaussian, `p = 1`.
    T8ContextualSsg,
}

impl BoundCurve {
    pub const ALL: [BoundCurve; 9] = [
        BoundCurve::T1Inf,
        BoundCurve::T2Finite,
        BoundCurve::T3Inf,
        BoundCurve::T3Finite,
        BoundCurve::T5Contextual,
        BoundCurve::T6SsgNonadaptive,
        BoundCurve::T7SsgAdaptiveInf,
        BoundCurve::T7SsgAdaptiveFinite,
        BoundCurve::T8ContextualSsg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundCurve::T1Inf => "T1_inf",
            BoundCurve::T2Finite => "T2_finite",
            BoundCurve::T3Inf => "T3_inf",
            BoundCurve::T3Finite => "T3_finite",
            BoundCurve::T5Contextual => "T5_contextual",
            BoundCurve::T6SsgNonadaptive => "T6_ssg_nonadaptive",
            BoundCurve::T7SsgAdaptiveInf => "T7_ssg_adaptive_inf",
            BoundCurve::T7SsgAdaptiveFinite => "T7_ssg_adaptive_finite",
            BoundCurve::T8ContextualSsg => "T8_contextual_ssg",
        }
    }

    /// Exponents `(a, b)` of `T^a (ln T)^b`.
    pub fn rate(&self, p: NormOrder) -> (f64, f64) {
        let slow = (-1.5, 0.5);
        let fast = (-2.0, 1.0);
        match self {
            BoundCurve::T1Inf | BoundCurve::T3Inf | BoundCurve::T7SsgAdaptiveInf => slow,
            BoundCurve::T6SsgNonadaptive if p.is_infinite() => slow,
            _ => fast,
        }
    }

    /// The curve matching a policy, regime and norm.
    pub fn default_for(policy: PolicyKind, regime: NoiseRegime, p: NormOrder) -> BoundCurve {
        let ssg = regime != NoiseRegime::Gsg;
        match (policy, ssg, p.is_infinite()) {
            (PolicyKind::NonAdaptive, false, true) => BoundCurve::T1Inf,
            (PolicyKind::NonAdaptive, false, false) => BoundCurve::T2Finite,
            (PolicyKind::NonAdaptive, true, _) => BoundCurve::T6SsgNonadaptive,
            (PolicyKind::Adaptive, false, true) => BoundCurve::T3Inf,
            (PolicyKind::Adaptive, false, false) => BoundCurve::T3Finite,
            (PolicyKind::Adaptive, true, true) => BoundCurve::T7SsgAdaptiveInf,
            (PolicyKind::Adaptive, true, false) => BoundCurve::T7SsgAdaptiveFinite,
            (PolicyKind::Contextual, false, _) => BoundCurve::T5Contextual,
            (PolicyKind::Contextual, true, _) => BoundCurve::T8ContextualSsg,
        }
    }
}

impl fmt::Display for BoundCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundCurve {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        BoundCurve::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::config(format!("unknown bound curve `{s}`")))
    }
}

/// Everything a curve may need besides `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs<'a> {
    pub profile: &'a VarianceProfile,
    pub norm: NormOrder,
    /// Context dimension `d` (contextual curves).
    pub dimension: Option<usize>,
    /// Smallest eigenvalue of the context second-moment matrix.
    pub lambda_min_c: Option<f64>,
    /// Upper-confidence shares in the last phase (tighter `p = inf` curves).
    pub phase3_ucb: bool,
}

impl<'a> BoundInputs<'a> {
    pub fn new(profile: &'a VarianceProfile, norm: NormOrder) -> Self {
        Self { profile, norm, dimension: None, lambda_min_c: None, phase3_ucb: false }
    }
}

fn need<T>(v: Option<T>, what: &str, curve: BoundCurve) -> Result<T> {
    v.ok_or_else(|| HarnessError::config(format!("{curve} needs {what}")))
}

fn finite_p(norm: NormOrder, curve: BoundCurve) -> Result<f64> {
    match norm {
        NormOrder::Finite(p) => Ok(p),
        NormOrder::Infinity => Err(HarnessError::config(format!("{curve} is defined for finite p only"))),
    }
}

fn infinite_p(norm: NormOrder, curve: BoundCurve) -> Result<()> {
    if norm.is_infinite() {
        Ok(())
    } else {
        Err(HarnessError::config(format!("{curve} is defined for p = inf only")))
    }
}

/// `sl^q / (sl^q + (K-1) s^q)`.
fn exploration_share(profile: &VarianceProfile, q: f64, curve: BoundCurve) -> Result<f64> {
    let lo = need(profile.lower_bound(), "a variance lower bound", curve)?.powf(q / 2.0);
    let hi = need(profile.proxy(), "a variance proxy", curve)?.powf(q / 2.0);
    Ok(lo / (lo + (profile.num_arms() - 1) as f64 * hi))
}

/// Constant `C` of the leading term.
pub fn leading_constant(curve: BoundCurve, inp: &BoundInputs<'_>) -> Result<f64> {
    let prof = inp.profile;
    let k = prof.num_arms() as f64;
    let sig = |a: f64| prof.power_sum(a);
    let s2min = prof.min_variance();
    let smin = s2min.sqrt();
    let proxy = || need(prof.proxy(), "a variance proxy", curve);
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(match curve {
        BoundCurve::T1Inf => {
            infinite_p(inp.norm, curve)?;
            let lambda = exploration_share(prof, 2.0, curve)?;
            let lower = need(prof.lower_bound(), "a variance lower bound", curve)?;
            4.0 * sqrt2 * proxy()? * lambda.powf(-0.5) * (k + sig(2.0) / lower - 2.0)
        }
        BoundCurve::T2Finite => {
            let p = finite_p(inp.norm, curve)?;
            let q = inp.norm.q();
            let lambda = exploration_share(prof, q, curve)?;
            let f = p * p * sig(q).powf(1.0 / p) * sig(q - 4.0) / (lambda * (p + 1.0));
            24.0 * proxy()?.powi(2) * f
        }
        BoundCurve::T3Inf => {
            infinite_p(inp.norm, curve)?;
            let f = if inp.phase3_ucb {
                2.0 * sig(2.0).sqrt() * (sig(-1.0) - 1.0 / smin)
            } else {
                sig(2.0).sqrt() * (sig(-1.0) + sig(2.0) / smin.powi(3) - 2.0 / smin)
            };
            8.0 * proxy()? * f
        }
        BoundCurve::T3Finite => {
            let p = finite_p(inp.norm, curve)?;
            let q = inp.norm.q();
            40.0 * proxy()?.powi(2) * p * p * sig(q).powf(2.0 / q) * sig(-4.0) / (p + 1.0)
        }
        BoundCurve::T5Contextual => {
            let d = need(inp.dimension, "the context dimension", curve)? as f64;
            let lc = need(inp.lambda_min_c, "lambda_min of the contexts", curve)?;
            // Finite-p adaptive factor at p = 1, q = 1.
            let f = sig(1.0).powi(2) * sig(-4.0) / 2.0;
            80.0 * d * proxy()? / lc * f
        }
        BoundCurve::T6SsgNonadaptive => match inp.norm {
            NormOrder::Infinity => {
                let lambda = exploration_share(prof, 2.0, curve)?;
                4.0 * lambda.powf(-0.5) * (sig(2.0) - s2min)
            }
            NormOrder::Finite(p) => {
                let q = inp.norm.q();
                let lambda = exploration_share(prof, q, curve)?;
                3.0 * p * p * sig(q).powf(2.0 / q) / (lambda * (p + 1.0))
            }
        },
        BoundCurve::T7SsgAdaptiveInf => {
            infinite_p(inp.norm, curve)?;
            let r2 = sig(2.0).sqrt();
            if inp.phase3_ucb {
                4.0 * sqrt2 * r2 * (sig(1.0) - smin)
            } else {
                2.0 * sqrt2 * (r2 * (sig(2.0) - 2.0 * s2min) / smin + r2 * sig(1.0))
            }
        }
        BoundCurve::T7SsgAdaptiveFinite => {
            let p = finite_p(inp.norm, curve)?;
            let q = inp.norm.q();
            5.0 * k * p * p * sig(q).powf(2.0 / q) / (p + 1.0)
        }
        BoundCurve::T8ContextualSsg => {
            let d = need(inp.dimension, "the context dimension", curve)? as f64;
            let lc = need(inp.lambda_min_c, "lambda_min of the contexts", curve)?;
            5.0 * d * k * sig(1.0).powi(2) / lc
        }
    })
}

/// Leading term of `curve` at horizon `t`.
pub fn bound_value(curve: BoundCurve, inp: &BoundInputs<'_>, t: f64) -> Result<f64> {
    let c = leading_constant(curve, inp)?;
    let (a, b) = curve.rate(inp.norm);
    Ok(c * t.powf(a) * t.ln().powf(b))
}
