mod common;

use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfdim::families::FamilyHandle;
use pfdim::measure::{
    epsilon, find_k_intersection, k_bound, mu_d_sequence, pair_threshold, pairwise_threshold_check, random_space,
    truncated_inclusion_exclusion, Event, FiniteMeasureSpace, KIntersection, PairwiseResult, SearchOptions, Strategy,
};
use pfdim::parser::parse_formula;
use pfdim::EngineConfig;

fn r(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

fn remeasure(space: &FiniteMeasureSpace, events: &[Event], indices: &[usize]) -> BigRational {
    let all = space.event(&(0..space.atoms()).collect::<Vec<_>>()).unwrap();
    space.mu(&indices.iter().fold(all, |acc, &i| acc.intersect(&events[i])))
}

/// A space whose least event measure is at most 1/2.
fn small_eps_space(rng: &mut ChaCha8Rng, events: usize) -> (FiniteMeasureSpace, Vec<Event>, BigRational) {
    loop {
        let atoms = rng.gen_range(1..=20);
        let (s, ev) = random_space(rng, atoms, events, &r(1, 3)).unwrap();
        let eps = epsilon(&s, &ev).unwrap();
        if eps <= r(1, 2) {
            return (s, ev, eps);
        }
    }
}

proptest! {
    #![proptest_config(common::config(300, 0x5eed_0050))]

    #[test]
    fn witnesses_meet_the_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = rng.gen_range(4..=16);
        let (s, ev, eps) = small_eps_space(&mut rng, events);
        for k in 1..=4usize {
            let opts = SearchOptions { workers: 1, ..SearchOptions::default() };
            match find_k_intersection(&s, &ev, k, &opts).unwrap() {
                KIntersection::Found { indices, measure, bound, .. } => {
                    prop_assert_eq!(indices.len(), k);
                    prop_assert!(indices.windows(2).all(|w| w[0] < w[1]));
                    prop_assert_eq!(&bound, &k_bound(&eps, k as u32));
                    prop_assert!(measure >= bound);
                    prop_assert_eq!(remeasure(&s, &ev, &indices), measure);
                }
                KIntersection::NotFound { .. } => prop_assert!(k > 1, "a single event always qualifies"),
                KIntersection::Exhausted { .. } => prop_assert!(false, "budget ran out"),
            }
        }
    }

    #[test]
    fn strategies_agree_on_existence(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = rng.gen_range(3..=10);
        let (s, ev, _) = small_eps_space(&mut rng, events);
        let k = rng.gen_range(2..=3).min(ev.len());
        let run = |strategy| {
            let opts = SearchOptions { workers: 1, strategy: Some(strategy), ..SearchOptions::default() };
            find_k_intersection(&s, &ev, k, &opts).unwrap()
        };
        let ex = run(Strategy::Exhaustive);
        if let KIntersection::Found { indices, measure, bound, .. } = run(Strategy::Recursive) {
            prop_assert!(measure >= bound);
            prop_assert_eq!(remeasure(&s, &ev, &indices), measure);
            let found = matches!(ex, KIntersection::Found { .. });
            prop_assert!(found);
        }
    }

    #[test]
    fn truncated_sum_never_exceeds_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = rng.gen_range(1..=20);
        let floor = r(rng.gen_range(1..=6), 6);
        let events = rng.gen_range(0..=30);
        let (s, ev) = random_space(&mut rng, atoms, events, &floor).unwrap();
        prop_assert!(truncated_inclusion_exclusion(&s, &ev) <= BigRational::one());
    }

    #[test]
    fn measures_are_additive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = rng.gen_range(1..=20);
        let (s, ev) = random_space(&mut rng, atoms, 2, &r(1, 2)).unwrap();
        let (a, b) = (&ev[0], &ev[1]);
        let union: Vec<usize> = (0..s.atoms()).filter(|i| a.atoms().contains(i) || b.atoms().contains(i)).collect();
        let union = s.mu(&s.event(&union).unwrap());
        prop_assert_eq!(union + s.mu(&a.intersect(b)), s.mu(a) + s.mu(b));
        let total: BigRational = s.weights().iter().sum();
        prop_assert!(total.is_one());
    }
}

proptest! {
    #![proptest_config(common::config(200, 0x5eed_0051))]

    #[test]
    fn pairwise_check_succeeds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = [r(1, 2), r(1, 3), r(1, 4)][rng.gen_range(0..3)].clone();
        let n = pair_threshold(&eps).unwrap() as usize;
        let atoms = rng.gen_range(1..=20);
        let (s, ev) = random_space(&mut rng, atoms, n, &eps).unwrap();
        match pairwise_threshold_check(&s, &ev, &eps).unwrap() {
            PairwiseResult::Ok { pair, measure, threshold } => {
                prop_assert_eq!(threshold as usize, n);
                prop_assert!(measure >= eps.pow(3));
                prop_assert_eq!(remeasure(&s, &ev, &pair), measure);
            }
            PairwiseResult::Counterexample { .. } => prop_assert!(false, "no pair reached eps^3"),
        }
    }
}

#[test]
fn pair_thresholds() {
    assert_eq!(pair_threshold(&r(1, 2)).unwrap(), 4);
    assert_eq!(pair_threshold(&r(1, 3)).unwrap(), 9);
    assert_eq!(pair_threshold(&r(1, 4)).unwrap(), 16);
    assert!(pair_threshold(&BigRational::zero()).is_err());
}

#[test]
fn domain_ratios_split_over_a_formula_and_its_negation() {
    let cfg = EngineConfig::default();
    let fam = FamilyHandle::named("rank2classes").unwrap();
    let sig = fam.model(3).unwrap().signature().clone();
    let p = |s: &str| parse_formula(s, &sig).unwrap();
    let sel = vec![("c".to_string(), "big-class".to_string()), ("e".to_string(), "class-1".to_string())];
    let indices = [2, 3, 4, 7];
    for d in ["x = x", "E(x,c) | E(x,e)", "!E(x,e)"] {
        for x in ["E(x,c)", "E(x,e)", "x = c", "E(x,c) & !(x = c)"] {
            let pos = mu_d_sequence(&fam, &p(d), &p(x), &indices, &sel, &cfg).unwrap();
            let neg = mu_d_sequence(&fam, &p(d), &p(x).not(), &indices, &sel, &cfg).unwrap();
            for (a, b) in pos.iter().zip(&neg) {
                assert!(a.ratio >= BigRational::zero() && a.ratio <= BigRational::one(), "{x} in {d}");
                assert_eq!(&a.ratio + &b.ratio, BigRational::one(), "{x} in {d}");
                assert_eq!(a.domain, b.domain);
            }
        }
    }
}
