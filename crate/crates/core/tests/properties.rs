use proptest::prelude::*;

use selfmig_core::game::MigrationPolicy;
use selfmig_core::generate::{generate, ArrivalModel, GeneratorConfig, RateModel, WeightModel};
use selfmig_core::queue::{rate_assignment, PolicyConfig, QueueState};
use selfmig_core::sim::{run, RunSettings};
use selfmig_core::{JobId, Mode, PowerFunction};

fn table_strategy() -> impl Strategy<Value = PowerFunction> {
    (prop::collection::vec((0.1f64..3.0, 0.05f64..2.0), 1..6), 0.05f64..2.0).prop_map(|(steps, first)| {
        let mut points = Vec::new();
        let (mut s, mut f, mut slope) = (0.0, 0.0, first);
        for (width, extra) in steps {
            s += width;
            f += slope * width;
            points.push([s, f]);
            slope += extra;
        }
        PowerFunction::table(&points).unwrap()
    })
}

fn power_strategy() -> impl Strategy<Value = PowerFunction> {
    prop_oneof![(1.05f64..5.0).prop_map(|g| PowerFunction::polynomial(g).unwrap()), table_strategy(),]
}

fn queue_of(weights: &[u64]) -> QueueState {
    let mut q = QueueState::new(0);
    for (j, &w) in weights.iter().enumerate() {
        q.enqueue_tail(JobId(j), w).unwrap();
    }
    q
}

/// Smallest `s` with `f(s) >= w`, by bracketed bisection.
fn bisect_inverse(pf: &PowerFunction, w: f64) -> f64 {
    let mut hi = 1.0;
    while pf.eval_f(hi).unwrap() < w {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pf.eval_f(mid).unwrap() < w {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `max_s s*beta - f(s)` by golden-section search on the concave objective.
fn golden_conjugate(pf: &PowerFunction, beta: f64) -> f64 {
    let h = |s: f64| s * beta - pf.eval_f(s).unwrap();
    let mut hi = 1.0;
    while h(2.0 * hi) > h(hi) {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if h(c) < h(d) {
            a = c;
        } else {
            b = d;
        }
    }
    h(0.5 * (a + b)).max(0.0)
}

proptest! {
    #[test]
    fn flow_rates_sum_to_eta(weights in prop::collection::vec(1u64..1000, 1..40), k in 1u32..8, eta in 1.01f64..10.0) {
        let q = queue_of(&weights);
        let cfg = PolicyConfig::new(k, eta, Mode::Flow).unwrap();
        let nu = rate_assignment(&q, &cfg, None).unwrap();
        let sum: f64 = nu.iter().sum();
        prop_assert!((sum - eta).abs() <= 1e-12 * eta.max(1.0));
        prop_assert!(nu.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn energy_rates_sum_to_speed(weights in prop::collection::vec(1u64..100, 1..20), k in 1u32..6, pf in power_strategy()) {
        let q = queue_of(&weights);
        let cfg = PolicyConfig::analysis(k, Mode::Energy).unwrap();
        let nu = rate_assignment(&q, &cfg, Some(&pf)).unwrap();
        let speed = pf.eval_g(q.total_weight() as f64).unwrap();
        let sum: f64 = nu.iter().sum();
        prop_assert!((sum - speed).abs() <= 1e-12 * speed.max(1.0));
    }

    #[test]
    fn round_robin_rates(weights in prop::collection::vec(1u64..1000, 1..40), eta in 0.1f64..10.0) {
        let q = queue_of(&weights);
        let cfg = PolicyConfig::round_robin(eta, Mode::Flow).unwrap();
        let nu = rate_assignment(&q, &cfg, None).unwrap();
        let total = q.total_weight() as f64;
        for (v, &w) in nu.iter().zip(&weights) {
            prop_assert!((v - eta * w as f64 / total).abs() <= 1e-12);
        }
    }

    #[test]
    fn inverse_round_trips(pf in power_strategy(), w in 1e-6f64..1e6) {
        let g = pf.eval_g(w).unwrap();
        let back = pf.eval_f(g).unwrap();
        prop_assert!((back - w).abs() <= 1e-10 * w, "f(g({w})) = {back}");
        let oracle = bisect_inverse(&pf, w);
        prop_assert!((g - oracle).abs() <= 1e-8 * oracle.max(1.0), "g = {g}, bisection {oracle}");
    }

    #[test]
    fn conjugate_matches_golden_section(pf in power_strategy(), beta in 0.0f64..50.0) {
        let closed = pf.eval_conjugate(beta);
        let oracle = golden_conjugate(&pf, beta);
        prop_assert!((closed - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "f*({beta}) = {closed}, search {oracle}");
    }

    #[test]
    fn conjugate_inverse_round_trips(pf in power_strategy(), w in 1e-6f64..1e6) {
        let beta = pf.eval_conjugate_inverse(w).unwrap();
        let back = pf.eval_conjugate(beta);
        prop_assert!((back - w).abs() <= 1e-10 * w, "f*(inv({w})) = {back}");
        let g = pf.eval_g(w).unwrap();
        prop_assert!(w / g <= beta * (1.0 + 1e-12));
    }

    #[test]
    fn conjugate_lemma_and_concavity(pf in power_strategy(), a in 1e-6f64..1e6, b in 1e-6f64..1e6) {
        prop_assert!(pf.check_conjugate_lemma(a));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let r_lo = pf.eval_g(lo).unwrap() / lo;
        let r_hi = pf.eval_g(hi).unwrap() / hi;
        prop_assert!(r_hi <= r_lo + 1e-9, "g(w)/w rose from {r_lo} to {r_hi}");
    }

    #[test]
    fn generated_instances_are_valid_and_repeatable(seed in any::<u64>(), m in 1usize..6, n in 0usize..30) {
        let cfg = GeneratorConfig {
            rate_model: RateModel::ZeroInflated { prob_zero: vec![0.4], lo: 0.2, hi: 3.0 },
            weight_model: WeightModel::PowerLaw { exponent: 1.2, cap: 64 },
            ..GeneratorConfig::flow(m, n, seed)
        };
        let a = generate(&cfg).unwrap();
        prop_assert!(a.validate().is_empty());
        prop_assert_eq!(a, generate(&cfg).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_replay_cleanly(seed in any::<u64>(), m in 1usize..4, n in 1usize..12, k in 1u32..4, pure in any::<bool>()) {
        let inst = generate(&GeneratorConfig::flow(m, n, seed)).unwrap();
        let mut settings = RunSettings::analysis(k, Mode::Flow).unwrap();
        if pure {
            settings.policy = MigrationPolicy::pure();
        }
        let res = run(&inst, &settings).unwrap();
        prop_assert!(res.replay_check(&inst).is_empty());
        prop_assert!(res.utility_drops.is_empty());
        let integrated: f64 = res.log.intervals().map(|iv| iv.len() * iv.alive_weight() as f64).sum();
        prop_assert!((integrated - res.weighted_flow).abs() <= 1e-9 * res.weighted_flow.max(1.0));
        prop_assert_eq!(res.clone(), run(&inst, &settings).unwrap());
    }

    #[test]
    fn energy_runs_spend_their_flow_time(seed in any::<u64>(), m in 1usize..4, n in 1usize..10, pf in power_strategy()) {
        let cfg = GeneratorConfig {
            arrival_model: ArrivalModel::Poisson { rate: 2.0 },
            power_palette: Some(vec![pf, PowerFunction::polynomial(2.0).unwrap()]),
            ..GeneratorConfig::flow(m, n, seed)
        };
        let inst = generate(&cfg).unwrap();
        let res = run(&inst, &RunSettings::analysis(2, Mode::Energy).unwrap()).unwrap();
        let energy = res.energy.unwrap();
        prop_assert!((energy - res.weighted_flow).abs() <= 1e-9 * res.weighted_flow.max(1.0));
        prop_assert!(res.replay_check(&inst).is_empty());
        prop_assert!(res.utility_drops.is_empty());
    }
}
