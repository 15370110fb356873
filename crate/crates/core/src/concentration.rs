//! Concentration radii for the sample variance and the confidence intervals
//! built from them.
//!
//! Every radius is a function of the sample size `n >= 2`, the failure
//! probability `delta` and a variance scale. Writing `L = ln(1/delta)`, the
//! subgaussian radii are
//!
//! ```text
//! eps+ = 4 s2 f(n) sqrt(2L/(n-1)) + 6 s2 L/n
//! eps- = 4 s2 f(n) sqrt(2L/(n-1)) + (13/3) s2 L/n
//! ```
//!
//! with `f(n) = (1 + sqrt(n-1)) / sqrt(n)` in general and
//! `f(n) = (1 + sqrt((n-1)/8)) / sqrt(n)` for strictly subgaussian noise.
//! For exactly Gaussian noise the chi-square radii
//! `eps+ = 2 s2 sqrt(L/(n-1)) + 2 s2 L/(n-1)` and `eps- = 2 s2 sqrt(L/(n-1))`
//! apply.

use crate::allocation::NormOrder;
use crate::error::{Error, Result};

/// Left (`eps-`) and right (`eps+`) deviation radii of the sample variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusPair {
    pub eps_minus: f64,
    pub eps_plus: f64,
}

/// Radii divided by the variance they scale with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplicativeFactors {
    pub s_minus: f64,
    pub s_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lcb: f64,
    pub ucb: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lcb <= v && v <= self.ucb
    }
}

/// Second-order constant of the left-tail subgaussian radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeftTail {
    /// `13/3`, the sharper two-sided form.
    #[default]
    Refined,
    /// `6`, identical to the right tail.
    Symmetric,
}

impl LeftTail {
    fn constant(self) -> f64 {
        match self {
            LeftTail::Refined => 13.0 / 3.0,
            LeftTail::Symmetric => 6.0,
        }
    }
}

/// Which algorithm a failure probability is scheduled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    NonAdaptive,
    Adaptive,
}

pub fn f_gsg(n: usize) -> f64 {
    let n = n as f64;
    (1.0 + (n - 1.0).sqrt()) / n.sqrt()
}

pub fn f_ssg(n: usize) -> f64 {
    let n = n as f64;
    (1.0 + ((n - 1.0) / 8.0).sqrt()) / n.sqrt()
}

fn log_inv(n: usize, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok((1.0 / delta).ln())
}

fn subgaussian(n: usize, delta: f64, scale: f64, f: f64, tail: LeftTail) -> Result<RadiusPair> {
    let l = log_inv(n, delta)?;
    let nf = n as f64;
    let lead = 4.0 * scale * f * (2.0 * l / (nf - 1.0)).sqrt();
    Ok(RadiusPair {
        eps_plus: lead + 6.0 * scale * l / nf,
        eps_minus: lead + tail.constant() * scale * l / nf,
    })
}

/// General subgaussian radii with the known variance proxy.
pub fn radius_gsg(n: usize, delta: f64, proxy: f64) -> Result<RadiusPair> {
    radius_gsg_with(n, delta, proxy, LeftTail::Refined)
}

pub fn radius_gsg_with(n: usize, delta: f64, proxy: f64, tail: LeftTail) -> Result<RadiusPair> {
    subgaussian(n, delta, proxy, f_gsg(n), tail)
}

/// Strictly subgaussian radii, scaled by the arm's own variance.
pub fn radius_ssg(n: usize, delta: f64, variance: f64) -> Result<RadiusPair> {
    radius_ssg_with(n, delta, variance, LeftTail::Refined)
}

pub fn radius_ssg_with(n: usize, delta: f64, variance: f64, tail: LeftTail) -> Result<RadiusPair> {
    subgaussian(n, delta, variance, f_ssg(n), tail)
}

/// Chi-square radii for Gaussian rewards.
pub fn radius_gaussian(n: usize, delta: f64, variance: f64) -> Result<RadiusPair> {
    let l = log_inv(n, delta)?;
    let m = (n - 1) as f64;
    let lead = 2.0 * variance * (l / m).sqrt();
    Ok(RadiusPair { eps_minus: lead, eps_plus: lead + 2.0 * variance * l / m })
}

/// Strictly subgaussian radii per unit variance.
pub fn factors_ssg(n: usize, delta: f64, tail: LeftTail) -> Result<MultiplicativeFactors> {
    let r = radius_ssg_with(n, delta, 1.0, tail)?;
    Ok(MultiplicativeFactors { s_minus: r.eps_minus, s_plus: r.eps_plus })
}

/// Gaussian radii per unit variance.
pub fn factors_gaussian(n: usize, delta: f64) -> Result<MultiplicativeFactors> {
    let r = radius_gaussian(n, delta, 1.0)?;
    Ok(MultiplicativeFactors { s_minus: r.eps_minus, s_plus: r.eps_plus })
}

/// Additive interval `[max(v - eps+, 0), v + eps-]`.
pub fn ci_gsg(sigma_sq_hat: f64, r: RadiusPair) -> ConfidenceInterval {
    ConfidenceInterval {
        lcb: (sigma_sq_hat - r.eps_plus).max(0.0),
        ucb: sigma_sq_hat + r.eps_minus,
    }
}

/// Self-normalised interval `[v / (1 + s+), v / (1 - s-)]`.
///
/// Fails while `s- >= 1`: the upper bound is then unbounded and more samples
/// are needed before the interval means anything.
pub fn ci_ssg(sigma_sq_hat: f64, s: MultiplicativeFactors) -> Result<ConfidenceInterval> {
    if s.s_minus >= 1.0 {
        return Err(Error::PhasePrecondition { s_minus: s.s_minus });
    }
    Ok(ConfidenceInterval {
        lcb: sigma_sq_hat / (1.0 + s.s_plus),
        ucb: sigma_sq_hat / (1.0 - s.s_minus),
    })
}

/// Failure probability used by each algorithm at horizon `horizon`.
pub fn delta_schedule(schedule: Schedule, p: NormOrder, horizon: usize) -> f64 {
    let t = horizon as f64;
    let exponent = match (schedule, p.is_infinite()) {
        (Schedule::NonAdaptive, true) => 1.0,
        (Schedule::NonAdaptive, false) => 1.5,
        (Schedule::Adaptive, true) => 2.0,
        (Schedule::Adaptive, false) => 2.5,
    };
    t.powf(-exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn gsg_hand_values() {
        let r = radius_gsg(2, 1.0 / E, 1.0).unwrap();
        assert_relative_eq!(r.eps_plus, 11.0, epsilon = 1e-12);
        assert_relative_eq!(r.eps_minus, 8.0 + 13.0 / 6.0, epsilon = 1e-12);
        let s = radius_gsg_with(2, 1.0 / E, 1.0, LeftTail::Symmetric).unwrap();
        assert_relative_eq!(s.eps_minus, s.eps_plus, epsilon = 1e-12);
        let d = radius_gsg(37, 0.01, 2.0).unwrap();
        let h = radius_gsg(37, 0.01, 1.0).unwrap();
        assert_relative_eq!(d.eps_plus, 2.0 * h.eps_plus, epsilon = 1e-12);
        assert_relative_eq!(d.eps_minus, 2.0 * h.eps_minus, epsilon = 1e-12);
        assert_eq!(radius_gsg(10, 1.0, 1.0).unwrap(), RadiusPair { eps_minus: 0.0, eps_plus: 0.0 });
        assert!(matches!(radius_gsg(1, 0.1, 1.0), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn ssg_hand_values() {
        let r = radius_ssg(2, 1.0 / E, 1.0).unwrap();
        let expected = 4.0 * (1.0 + (0.125f64).sqrt()) + 3.0;
        assert_relative_eq!(r.eps_plus, expected, epsilon = 1e-12);
        assert_relative_eq!(r.eps_plus, 8.414213562373096, epsilon = 1e-9);

        // Independent re-evaluation at n = 101, delta = 0.01.
        let l = 100f64.ln();
        let f = (1.0 + (100.0f64 / 8.0).sqrt()) / 101f64.sqrt();
        let r = radius_ssg(101, 0.01, 1.0).unwrap();
        assert_relative_eq!(r.eps_plus, 4.0 * f * (2.0 * l / 100.0).sqrt() + 6.0 * l / 101.0, epsilon = 1e-12);
        assert_relative_eq!(r.eps_minus, 4.0 * f * (2.0 * l / 100.0).sqrt() + 13.0 * l / 303.0, epsilon = 1e-12);
        for n in 2..500 {
            assert!(radius_ssg(n, 0.05, 1.0).unwrap().eps_plus < radius_gsg(n, 0.05, 1.0).unwrap().eps_plus);
        }
    }

    #[test]
    fn gaussian_hand_values() {
        let r = radius_gaussian(2, 1.0 / E, 1.0).unwrap();
        assert_relative_eq!(r.eps_plus, 4.0, epsilon = 1e-12);
        assert_relative_eq!(r.eps_minus, 2.0, epsilon = 1e-12);
        assert_eq!(radius_gaussian(5, 1.0, 3.0).unwrap(), RadiusPair { eps_minus: 0.0, eps_plus: 0.0 });
        let r = radius_gaussian(10_000, 0.01, 1.0).unwrap();
        assert!((r.eps_plus / r.eps_minus - 1.0).abs() < 0.03);
    }

    #[test]
    fn regime_ordering() {
        for n in 9..2000 {
            for delta in [0.5, 0.1, 0.01, 1e-4, 1e-8] {
                let g = radius_gaussian(n, delta, 1.0).unwrap();
                let s = radius_ssg(n, delta, 1.0).unwrap();
                let a = radius_gsg(n, delta, 1.0).unwrap();
                assert!(g.eps_plus <= s.eps_plus && s.eps_plus <= a.eps_plus, "n={n} delta={delta}");
                assert!(g.eps_minus <= s.eps_minus && s.eps_minus <= a.eps_minus, "n={n} delta={delta}");
            }
        }
    }

    #[test]
    fn intervals() {
        let ci = ci_gsg(5.0, RadiusPair { eps_minus: 1.0, eps_plus: 2.0 });
        assert_eq!(ci, ConfidenceInterval { lcb: 3.0, ucb: 6.0 });
        assert_eq!(ci_gsg(1.0, RadiusPair { eps_minus: 1.0, eps_plus: 2.0 }).lcb, 0.0);
        assert_eq!(ci_gsg(1.5, RadiusPair { eps_minus: 0.0, eps_plus: 0.0 }), ConfidenceInterval { lcb: 1.5, ucb: 1.5 });

        let ci = ci_ssg(2.0, MultiplicativeFactors { s_minus: 0.5, s_plus: 1.0 }).unwrap();
        assert_eq!(ci, ConfidenceInterval { lcb: 1.0, ucb: 4.0 });
        let ci = ci_ssg(2.0, MultiplicativeFactors { s_minus: 0.0, s_plus: 0.0 }).unwrap();
        assert_eq!(ci, ConfidenceInterval { lcb: 2.0, ucb: 2.0 });
        assert!(matches!(
            ci_ssg(2.0, MultiplicativeFactors { s_minus: 1.0, s_plus: 0.0 }),
            Err(Error::PhasePrecondition { .. })
        ));
    }

    #[test]
    fn schedules() {
        let inf = NormOrder::Infinity;
        let one = NormOrder::finite(1.0).unwrap();
        assert_relative_eq!(delta_schedule(Schedule::NonAdaptive, inf, 100), 0.01, max_relative = 1e-12);
        assert_relative_eq!(delta_schedule(Schedule::NonAdaptive, one, 100), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(delta_schedule(Schedule::Adaptive, inf, 100), 1e-4, max_relative = 1e-12);
        assert_relative_eq!(delta_schedule(Schedule::Adaptive, one, 100), 1e-5, max_relative = 1e-12);
    }
}
