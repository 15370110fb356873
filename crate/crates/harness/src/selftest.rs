//! Randomised invariant suite behind the `selftest` subcommand.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use varalloc_core::allocation::{adaptive_weight, optimal_fractions, plugin_weights, NormOrder};
use varalloc_core::arms::{substream, ArmBank, ArmSpec, ContextSpec, ContextualSource, LinearBank, NoiseRegime};
use varalloc_core::policies::{run_adaptive, run_contextual, run_nonadaptive, PolicyConfig, PolicyTrace};

use crate::seeds::trial_seed;

/// Outcome counts of the suite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelftestReport {
    pub configs: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configs, {} checks, {} failures", self.configs, self.checks, self.failures.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    NonAdaptive,
    Adaptive,
}

/// Arm whose contexts are rescaled from round `split` on, with rewards kept
/// consistent with the altered contexts.
struct AlteredFuture {
    inner: LinearBank,
    round: usize,
    split: usize,
    scale: Vec<f64>,
}

impl ContextualSource for AlteredFuture {
    fn num_arms(&self) -> usize {
        self.inner.num_arms()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn pull(&mut self, arm: usize) -> (Vec<f64>, f64) {
        let (c, x) = self.inner.pull(arm);
        self.round += 1;
        if self.round <= self.split {
            return (c, x);
        }
        let altered: Vec<f64> = c.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        let shift: f64 =
            self.inner.betas()[arm].iter().zip(altered.iter().zip(&c)).map(|(b, (n, o))| b * (n - o)).sum();
        (altered, x + shift)
    }
}

fn random_norm(rng: &mut ChaCha8Rng) -> NormOrder {
    *[NormOrder::Finite(1.0), NormOrder::Finite(2.0), NormOrder::Finite(3.5), NormOrder::Infinity]
        .choose(rng)
        .expect("nonempty")
}

fn random_regime(rng: &mut ChaCha8Rng) -> NoiseRegime {
    *[NoiseRegime::Gsg, NoiseRegime::Ssg, NoiseRegime::GaussianExact].choose(rng).expect("nonempty")
}

fn budget_checks(report: &mut SelftestReport, label: &str, tr: &PolicyTrace, horizon: usize) {
    let total: usize = tr.counts.iter().sum();
    report.check(total == horizon, || format!("{label}: spent {total} of {horizon}"));
    report.check(tr.arm_sequence.len() == horizon, || format!("{label}: sequence length {}", tr.arm_sequence.len()));
    report.check(tr.counts.iter().all(|&n| n >= 2), || format!("{label}: an arm has fewer than two pulls"));
    report.check(tr.regret >= -1e-12, || format!("{label}: negative regret {}", tr.regret));
    let ordered = tr.phase1_end.iter().zip(&tr.phase2_end).zip(&tr.counts).all(|((a, b), n)| a <= b && b <= n);
    report.check(ordered, || format!("{label}: phase boundaries out of order"));
}

fn canonical_case(report: &mut SelftestReport, rng: &mut ChaCha8Rng, seed: u64, kind: Kind) {
    let k = rng.random_range(2..=5);
    let vars: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..6.0)).collect();
    let horizon = rng.random_range(20 * k..=4000);
    let norm = random_norm(rng);
    let regime = random_regime(rng);
    let lo = vars.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vars.iter().copied().fold(0.0, f64::max);
    let mut cfg = PolicyConfig::new(horizon, norm, regime)
        .with_proxy(hi * rng.random_range(1.0..1.5))
        .with_phase3_ucb(rng.random_bool(0.3))
        .with_batch_growth(rng.random_range(1.05..3.0));
    if kind == Kind::NonAdaptive || rng.random_bool(0.3) {
        cfg = cfg.with_lower_bound(lo * rng.random_range(0.5..1.0));
    }
    let arms: Vec<ArmSpec> = vars.iter().map(|&v| ArmSpec::gaussian(rng.random_range(-3.0..3.0), v).unwrap()).collect();
    let label = format!("{kind:?} seed={seed} K={k} T={horizon} p={norm} regime={regime}");
    let run = || {
        let mut env = ArmBank::new(arms.clone(), seed);
        match kind {
            Kind::NonAdaptive => run_nonadaptive(&cfg, &mut env, &vars),
            _ => run_adaptive(&cfg, &mut env, &vars),
        }
    };
    let (a, b) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            report.check(false, || format!("{label}: run failed: {e}"));
            return;
        }
    };
    budget_checks(report, &label, &a, horizon);
    report.check(a == b, || format!("{label}: rerun with the same seed differs"));
    if kind == Kind::Adaptive && a.good_event && !a.truncated {
        let fr = optimal_fractions(&vars, norm);
        for arm in 0..k {
            let cap = (fr[arm] * horizon as f64).max(a.phase1_end[arm] as f64) + k as f64;
            report.check(a.phase2_end[arm] as f64 <= cap, || {
                format!("{label}: arm {arm} stopped at {} beyond {cap}", a.phase2_end[arm])
            });
        }
    }
}

fn contextual_case(report: &mut SelftestReport, rng: &mut ChaCha8Rng, seed: u64) {
    let k = rng.random_range(2..=4);
    let d = rng.random_range(1..=4);
    let horizon = rng.random_range(30 * k * d..=2500).max(30 * k * d);
    let betas: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let noise: Vec<ArmSpec> = (0..k).map(|_| ArmSpec::gaussian(0.0, rng.random_range(1.0..4.0)).unwrap()).collect();
    let truth: Vec<f64> = noise.iter().map(ArmSpec::variance).collect();
    let regime = random_regime(rng);
    let cfg = PolicyConfig::new(horizon, NormOrder::Finite(1.0), regime).with_proxy(4.0);
    let contexts = ContextSpec::uniform_hypercube(d).unwrap();
    let make = || LinearBank::new(betas.clone(), noise.clone(), contexts.clone(), seed).unwrap();
    let label = format!("Contextual seed={seed} K={k} d={d} T={horizon} regime={regime}");
    let split = rng.random_range(0..horizon);
    let scale: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let runs = (
        run_contextual(&cfg, &mut make(), 1.0, &truth),
        run_contextual(&cfg, &mut make(), 1.0, &truth),
        run_contextual(&cfg, &mut AlteredFuture { inner: make(), round: 0, split, scale }, 1.0, &truth),
    );
    let (a, b, alt) = match runs {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
            report.check(false, || format!("{label}: run failed: {e}"));
            return;
        }
    };
    budget_checks(report, &label, &a, horizon);
    report.check(a == b, || format!("{label}: rerun with the same seed differs"));
    report.check(a.arm_sequence[..=split] == alt.arm_sequence[..=split], || {
        format!("{label}: arm choice up to round {split} depends on later contexts")
    });
}

fn weight_case(report: &mut SelftestReport, rng: &mut ChaCha8Rng) {
    let k = rng.random_range(2..=6);
    let vars: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..20.0)).collect();
    let q = random_norm(rng).q();
    let truth = plugin_weights(&vars, q).expect("positive variances");
    for arm in 0..k {
        let lcb = vars[arm] * rng.random_range(0.0..1.0);
        let ucbs: Vec<f64> =
            (0..k).filter(|&j| j != arm).map(|j| vars[j] * rng.random_range(1.0..3.0)).collect();
        let w = adaptive_weight(lcb, &ucbs, q);
        report.check(w <= truth[arm] + 1e-12, || format!("weight {w} above optimal share {}", truth[arm]));
        let up = adaptive_weight(lcb + rng.random_range(0.0..5.0), &ucbs, q);
        report.check(up >= w - 1e-15, || "weight decreased in its own lower bound".into());
        let mut bumped = ucbs.clone();
        let j = rng.random_range(0..bumped.len());
        bumped[j] += rng.random_range(0.0..5.0);
        let down = adaptive_weight(lcb, &bumped, q);
        report.check(down <= w + 1e-15, || "weight increased in another arm's upper bound".into());
    }
}

/// Runs `configs` randomised configurations, cycling through the three
/// policies, plus allocation-weight checks for each.
pub fn run_selftest(configs: usize, master_seed: u64) -> SelftestReport {
    let mut report = SelftestReport { configs, ..Default::default() };
    for i in 0..configs {
        let seed = trial_seed(master_seed, i as u64);
        let mut rng = substream(seed, u64::MAX);
        match i % 3 {
            0 => canonical_case(&mut report, &mut rng, seed, Kind::NonAdaptive),
            1 => canonical_case(&mut report, &mut rng, seed, Kind::Adaptive),
            _ => contextual_case(&mut report, &mut rng, seed),
        }
        weight_case(&mut report, &mut rng);
    }
    report
}
