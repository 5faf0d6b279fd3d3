mod common;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfdim::dimension::{chain_detect, classify, cluster, delta_compare, fmv_spectrum, ChainStep, Classification, Thresholds};
use pfdim::families::{CardinalitySequence, FamilyHandle, SequenceEntry};
use pfdim::parser::parse_formula;
use pfdim::{Count, EngineConfig};

/// Counts `a * n^e` (or 0) along the indices, with small random factors.
fn random_sequence<R: Rng>(rng: &mut R, indices: &[u64]) -> CardinalitySequence {
    let e = rng.gen_range(0..=3u32);
    let a = rng.gen_range(1..=20u64);
    let empty_from = if rng.gen_bool(0.1) { rng.gen_range(0..indices.len()) } else { indices.len() };
    CardinalitySequence {
        family: "synthetic".into(),
        formula: format!("{a} n^{e}"),
        selector: String::new(),
        entries: indices
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let wobble = rng.gen_range(1..=3u64);
                let v = if i >= empty_from { BigUint::from(0u32) } else { BigUint::from(a * wobble) * BigUint::from(n).pow(e) };
                SequenceEntry { index: n, count: Count::new(v) }
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(common::config(500, 0x5eed_0040))]

    #[test]
    fn swapping_flips_the_verdict(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..=6);
        let indices: Vec<u64> = (0..len).map(|i| 4 << i).collect();
        let x = random_sequence(&mut rng, &indices);
        let y = random_sequence(&mut rng, &indices);
        let th = Thresholds::default();
        let xy = delta_compare(&x, &y, &th).unwrap().classification;
        let yx = delta_compare(&y, &x, &th).unwrap().classification;
        prop_assert_eq!(yx, xy.flip());
    }

    #[test]
    fn equal_survives_bounded_scaling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices: Vec<u64> = (0..5).map(|i| 4 << i).collect();
        let x = random_sequence(&mut rng, &indices);
        let mut y = x.clone();
        for e in &mut y.entries {
            e.count = Count::new(e.count.value() * rng.gen_range(1..=3u64));
        }
        let th = Thresholds::default();
        let v = delta_compare(&x, &y, &th).unwrap();
        prop_assume!(v.classification == Classification::Equal);
        let worst = v.log_ratios.iter().filter(|r| r.is_finite()).fold(0f64, |m, r| m.max(r.abs()));
        // stay clear of the boundary, where ln(10a) - ln(a) can round past tau
        let c = (th.tau - worst - 1e-9).exp().floor() as u64;
        prop_assume!(c >= 1);
        prop_assert_eq!(delta_compare(&x, &y.scaled(c), &th).unwrap().classification, Classification::Equal);
        prop_assert_eq!(delta_compare(&x.scaled(c), &y, &th).unwrap().classification, Classification::Equal);
    }

    #[test]
    fn clusters_merge_as_gamma_grows(mut v in proptest::collection::vec(-5.0f64..50.0, 0..40), g1 in 0.0f64..3.0, dg in 0.0f64..3.0) {
        v.sort_by(f64::total_cmp);
        let a = cluster(&v, g1);
        let b = cluster(&v, g1 + dg);
        prop_assert!(b.len() <= a.len());
        prop_assert_eq!(a.iter().map(|c| c[1] - c[0] + 1).sum::<usize>(), v.len());
    }

    #[test]
    fn short_or_flat_ratios(lr in proptest::collection::vec(-2.0f64..2.0, 0..10)) {
        let th = Thresholds::default();
        let (c, _) = classify(&lr, &th);
        if lr.len() < th.min_samples {
            prop_assert_eq!(c, Classification::Undetermined);
        } else {
            prop_assert_eq!(c, Classification::Equal);
        }
    }
}

proptest! {
    #![proptest_config(common::config(40, 0x5eed_0041))]

    #[test]
    fn chain_prefixes_never_grow(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fam = FamilyHandle::named("earlyexample").unwrap();
        let sig = fam.model(4).unwrap().signature().clone();
        let pool = ["E(x,y)", "!E(x,y)", "E(x,y) & !(x = y)", "x = y", "exists z:S. E(x,z) & !(z = y)"];
        let steps: Vec<ChainStep> = (0..rng.gen_range(1..=4))
            .map(|_| ChainStep {
                formula: parse_formula(pool[rng.gen_range(0..pool.len())], &sig).unwrap(),
                selector: vec![("y".into(), format!("class-{}", rng.gen_range(1..=3)))],
            })
            .collect();
        let r = chain_detect(&steps, &fam, &[3, 4, 5, 6], &Thresholds::default(), &EngineConfig::default()).unwrap();
        prop_assert!(r.nested);
        for w in r.prefixes.windows(2) {
            for (a, b) in w[0].entries.iter().zip(&w[1].entries) {
                prop_assert!(b.count <= a.count);
            }
        }
        prop_assert!(r.length <= steps.len());
    }
}

#[test]
fn spectrum_counts_drop_with_gamma() {
    let fam = FamilyHandle::named("findelta").unwrap();
    let sig = fam.model(4).unwrap().signature().clone();
    let f = parse_formula("E(x,y)", &sig).unwrap();
    let params = vec![("y".to_string(), "S".to_string())];
    let cfg = EngineConfig::default();
    let mut last: Option<Vec<usize>> = None;
    for gamma in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        let r = fmv_spectrum(&f, &fam, &[3, 4, 5], &params, gamma, &cfg).unwrap();
        if let Some(prev) = &last {
            assert!(r.cluster_counts.iter().zip(prev).all(|(a, b)| a <= b), "gamma {gamma}");
        }
        last = Some(r.cluster_counts);
    }
}
