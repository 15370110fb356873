use proptest::prelude::*;

use nalgebra::DMatrix;
use varalloc_core::allocation::{
    adaptive_weight, complete_allocation, objective_rp, optimal_fractions, plugin_weights, regret, round_allocation,
    NormOrder,
};
use varalloc_core::arms::{ArmBank, ArmSpec, ContextSpec, ContextualSource, LinearBank, NoiseRegime, RewardSource};
use varalloc_core::concentration::{
    ci_gsg, ci_ssg, factors_ssg, radius_gaussian, radius_gsg, radius_ssg, LeftTail,
};
use varalloc_core::estimation::{RidgeState, RunningMoments};
use varalloc_core::policies::{run_adaptive, run_contextual, run_nonadaptive, PolicyConfig};

fn norm_strategy() -> impl Strategy<Value = NormOrder> {
    prop_oneof![
        Just(NormOrder::Infinity),
        (1.0f64..6.0).prop_map(NormOrder::Finite),
    ]
}

fn two_pass_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

proptest! {
    #[test]
    fn streaming_matches_batch(xs in prop::collection::vec(-1e3f64..1e3, 2..200), shift in -1e4f64..1e4) {
        let ys: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let stream = RunningMoments::from_slice(&ys).sample_variance().unwrap();
        let batch = two_pass_variance(&ys);
        prop_assert!((stream - batch).abs() <= 1e-10 * batch.abs().max(1e-6), "{stream} vs {batch}");
    }

    #[test]
    fn ridge_shrinks_with_gamma(
        d in 1usize..5,
        raw in prop::collection::vec(-2.0f64..2.0, 40),
        ys in prop::collection::vec(-5.0f64..5.0, 10),
        g1 in 0.0f64..3.0,
        dg in 0.0f64..3.0,
    ) {
        let mut s = RidgeState::new(d);
        for (i, y) in ys.iter().enumerate() {
            let c: Vec<f64> = (0..d).map(|j| raw[(i * d + j) % raw.len()] + if i == j { 3.0 } else { 0.0 }).collect();
            s.update(&c, *y).unwrap();
        }
        let eig = s.gram().clone().symmetric_eigen().eigenvalues;
        prop_assume!(eig.min() > 1e-6 * eig.max());
        let norm = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let a = norm(s.estimate(g1).unwrap());
        let b = norm(s.estimate(g1 + dg).unwrap());
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn fractions_scale_invariant(vars in prop::collection::vec(0.05f64..20.0, 1..6), c in 0.01f64..100.0, p in norm_strategy()) {
        let a = optimal_fractions(&vars, p);
        let scaled: Vec<f64> = vars.iter().map(|v| v * c).collect();
        let b = optimal_fractions(&scaled, p);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn regret_is_nonnegative(vars in prop::collection::vec(0.05f64..20.0, 1..6), extra in prop::collection::vec(0usize..200, 6), p in norm_strategy()) {
        let counts: Vec<usize> = vars.iter().enumerate().map(|(k, _)| 1 + extra[k]).collect();
        prop_assert!(regret(&counts, &vars, p).unwrap() >= -1e-12);
    }

    #[test]
    fn rounding_spends_budget(raw in prop::collection::vec(0.0f64..1.0, 1..8), t in 1usize..5000, pri in prop::collection::vec(0.0f64..5.0, 8)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let fr: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let counts = round_allocation(&fr, t, &pri[..fr.len()]);
        prop_assert_eq!(counts.iter().sum::<usize>(), t);
        for (n, l) in counts.iter().zip(&fr) {
            prop_assert!(*n as f64 >= (l * t as f64 - 1e-6).floor());
        }
    }

    #[test]
    fn completion_dominates_commitment(
        committed in prop::collection::vec(0usize..50, 1..6),
        raw in prop::collection::vec(0.0f64..1.0, 6),
        extra in 0usize..500,
    ) {
        let k = committed.len();
        let t = committed.iter().sum::<usize>() + extra;
        let counts = complete_allocation(&committed, &raw[..k], t, &raw[..k]);
        prop_assert_eq!(counts.iter().sum::<usize>(), t);
        for (n, c) in counts.iter().zip(&committed) {
            prop_assert!(n >= c);
        }
    }

    #[test]
    fn adaptive_weight_monotone(
        lcb in 0.0f64..10.0, dl in 0.0f64..5.0,
        ucbs in prop::collection::vec(0.01f64..10.0, 1..5), du in 0.0f64..5.0, j in 0usize..5,
        q in 0.5f64..2.0,
    ) {
        let base = adaptive_weight(lcb, &ucbs, q);
        prop_assert!(adaptive_weight(lcb + dl, &ucbs, q) >= base - 1e-15);
        let mut bumped = ucbs.clone();
        let j = j % bumped.len();
        bumped[j] += du;
        prop_assert!(adaptive_weight(lcb, &bumped, q) <= base + 1e-15);
    }

    #[test]
    fn adaptive_weight_is_pessimistic(
        vars in prop::collection::vec(0.05f64..20.0, 2..6),
        shrink in 0.0f64..1.0,
        grow in prop::collection::vec(1.0f64..3.0, 6),
        p in norm_strategy(),
    ) {
        let q = p.q();
        let truth = plugin_weights(&vars, q).unwrap();
        for k in 0..vars.len() {
            let ucbs: Vec<f64> = (0..vars.len()).filter(|&j| j != k).map(|j| vars[j] * grow[j]).collect();
            let w = adaptive_weight(vars[k] * shrink, &ucbs, q);
            prop_assert!(w <= truth[k] + 1e-12);
        }
    }

    #[test]
    fn radii_monotone(n in 2usize..5000, dn in 1usize..100, delta in 1e-9f64..0.9, shrink in 0.01f64..1.0, s2 in 0.1f64..10.0) {
        for f in [radius_gsg, radius_ssg, radius_gaussian] {
            let a = f(n, delta, s2).unwrap();
            let later = f(n + dn, delta, s2).unwrap();
            let tighter = f(n, delta * shrink, s2).unwrap();
            prop_assert!(later.eps_plus <= a.eps_plus + 1e-12 && later.eps_minus <= a.eps_minus + 1e-12);
            prop_assert!(tighter.eps_plus >= a.eps_plus - 1e-12 && tighter.eps_minus >= a.eps_minus - 1e-12);
        }
    }

    #[test]
    fn intervals_bracket_estimate(hat in 0.0f64..50.0, n in 2usize..5000, delta in 1e-9f64..0.9, proxy in 0.1f64..10.0) {
        let ci = ci_gsg(hat, radius_gsg(n, delta, proxy).unwrap());
        prop_assert!(ci.lcb <= hat && hat <= ci.ucb);
        let s = factors_ssg(n, delta, LeftTail::Refined).unwrap();
        if let Ok(ci) = ci_ssg(hat, s) {
            prop_assert!(ci.lcb <= hat && hat <= ci.ucb);
        }
    }
}

fn gaussian_bank(vars: &[f64], seed: u64) -> ArmBank {
    ArmBank::new(vars.iter().map(|&v| ArmSpec::gaussian(0.0, v).unwrap()).collect(), seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policies_spend_exact_budget(
        vars in prop::collection::vec(0.2f64..8.0, 2..5),
        t in 40usize..3000,
        seed in any::<u64>(),
        p in norm_strategy(),
        regime in prop_oneof![Just(NoiseRegime::Ssg), Just(NoiseRegime::GaussianExact), Just(NoiseRegime::Gsg)],
    ) {
        let k = vars.len();
        let lo = vars.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vars.iter().copied().fold(0.0, f64::max);
        let cfg = PolicyConfig::new(t, p, regime).with_proxy(hi);
        let a = run_adaptive(&cfg, &mut gaussian_bank(&vars, seed), &vars).unwrap();
        prop_assert_eq!(a.counts.iter().sum::<usize>(), t);
        prop_assert_eq!(a.arm_sequence.len(), t);
        prop_assert!(a.counts.iter().all(|&n| n >= 2));
        prop_assert!(a.regret >= -1e-12);
        let again = run_adaptive(&cfg, &mut gaussian_bank(&vars, seed), &vars).unwrap();
        prop_assert_eq!(&a, &again);

        let n = run_nonadaptive(&cfg.clone().with_lower_bound(lo), &mut gaussian_bank(&vars, seed), &vars).unwrap();
        prop_assert_eq!(n.counts.iter().sum::<usize>(), t);
        prop_assert_eq!(n.counts.len(), k);
        prop_assert!(n.counts.iter().all(|&c| c >= 2));
    }

    #[test]
    fn no_overshoot_under_good_event(
        vars in prop::collection::vec(0.5f64..6.0, 2..5),
        t in 500usize..6000,
        seed in any::<u64>(),
        p in norm_strategy(),
    ) {
        let k = vars.len();
        let cfg = PolicyConfig::new(t, p, NoiseRegime::GaussianExact);
        let tr = run_adaptive(&cfg, &mut gaussian_bank(&vars, seed), &vars).unwrap();
        if tr.good_event && !tr.truncated {
            let fr = optimal_fractions(&vars, p);
            for a in 0..k {
                let bound = (fr[a] * t as f64).max(tr.phase1_end[a] as f64) + k as f64;
                prop_assert!(tr.phase2_end[a] as f64 <= bound, "arm {a}: {} > {bound}", tr.phase2_end[a]);
            }
        }
    }
}

/// Contexts from a fixed prefix, then anything after round `split`.
struct Scripted {
    inner: LinearBank,
    round: usize,
    split: usize,
    alt: Vec<f64>,
}

impl ContextualSource for Scripted {
    fn num_arms(&self) -> usize {
        self.inner.num_arms()
    }
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn pull(&mut self, arm: usize) -> (Vec<f64>, f64) {
        let (c, x) = self.inner.pull(arm);
        self.round += 1;
        if self.round > self.split {
            let c2: Vec<f64> = c.iter().zip(&self.alt).map(|(a, b)| a * b).collect();
            let shift: f64 = self.inner.betas()[arm].iter().zip(&c2).zip(&c).map(|((b, n), o)| b * (n - o)).sum();
            (c2, x + shift)
        } else {
            (c, x)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contextual_choice_ignores_future(seed in any::<u64>(), split in 10usize..1500, k in 2usize..4) {
        let d = 3;
        let betas: Vec<Vec<f64>> = (0..k).map(|a| vec![a as f64 - 1.0, 0.5, 2.0]).collect();
        let noise: Vec<ArmSpec> = (0..k).map(|a| ArmSpec::gaussian(0.0, 1.0 + a as f64).unwrap()).collect();
        let truth: Vec<f64> = noise.iter().map(ArmSpec::variance).collect();
        let cfg = PolicyConfig::new(2000, NormOrder::Finite(1.0), NoiseRegime::Ssg);
        let make = || LinearBank::new(betas.clone(), noise.clone(), ContextSpec::uniform_hypercube(d).unwrap(), seed).unwrap();
        let base = run_contextual(&cfg, &mut make(), 1.0, &truth).unwrap();
        let mut alt = Scripted { inner: make(), round: 0, split, alt: vec![-1.0, 0.5, 1.5] };
        let other = run_contextual(&cfg, &mut alt, 1.0, &truth).unwrap();
        prop_assert_eq!(base.counts.iter().sum::<usize>(), 2000);
        // The arm at round t depends on contexts of rounds before t only.
        prop_assert_eq!(&base.arm_sequence[..=split], &other.arm_sequence[..=split]);
    }
}

#[test]
fn exhaustive_rounding_slack() {
    let grid = [1.0, 2.0, 4.0];
    let t = 30;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let v = [a, b, c];
                for p in [NormOrder::Finite(1.0), NormOrder::Finite(2.0), NormOrder::Infinity] {
                    let mut best = f64::INFINITY;
                    for x in 1..t - 1 {
                        for y in 1..t - x {
                            best = best.min(objective_rp(&[x, y, t - x - y], &v, p).unwrap());
                        }
                    }
                    let counts = round_allocation(&optimal_fractions(&v, p), t, &v);
                    let got = objective_rp(&counts, &v, p).unwrap();
                    assert!(got >= best - 1e-12);
                    assert!(got - best <= best * 3.0 / t as f64, "{v:?} {p}: {got} vs {best}");
                }
            }
        }
    }
}

#[test]
fn identity_context_covariance() {
    let spec = ContextSpec::uniform_hypercube(4).unwrap();
    let mut rng = varalloc_core::arms::substream(8, varalloc_core::arms::CONTEXT_STREAM);
    let n = 200_000;
    let mut m = DMatrix::<f64>::zeros(4, 4);
    for _ in 0..n {
        let c = rand_distr::Distribution::sample(&spec, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] += c[i] * c[j];
            }
        }
    }
    m /= n as f64;
    let eig = m.symmetric_eigen().eigenvalues;
    assert!((eig.min() - 1.0).abs() < 0.02 && (eig.max() - 1.0).abs() < 0.02, "{eig}");
}

#[test]
fn reward_sources_are_seeded() {
    let mut a = gaussian_bank(&[1.0, 2.0], 77);
    let mut b = gaussian_bank(&[1.0, 2.0], 77);
    for k in [0, 1, 1, 0, 1] {
        assert_eq!(a.pull(k), b.pull(k));
    }
}

#[test]
fn adaptive_shares_converge() {
    let vars = [1.0, 1.5, 2.0, 2.5];
    let t = 100_000;
    for p in [NormOrder::Finite(1.0), NormOrder::Infinity] {
        let cfg = PolicyConfig::new(t, p, NoiseRegime::Ssg);
        let runs: Vec<Vec<usize>> =
            (0..11).map(|seed| run_adaptive(&cfg, &mut gaussian_bank(&vars, seed), &vars).unwrap().counts).collect();
        let target = optimal_fractions(&vars, p);
        for (k, lam) in target.iter().enumerate() {
            let mut shares: Vec<f64> = runs.iter().map(|c| c[k] as f64 / t as f64).collect();
            shares.sort_by(f64::total_cmp);
            let median = shares[shares.len() / 2];
            assert!((median - lam).abs() < 0.05, "p={p} arm {k}: median share {median} vs {lam}");
        }
    }
}
