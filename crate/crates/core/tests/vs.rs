mod common;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfdim::families::VectorSpace;
use pfdim::logic::Formula;
use pfdim::vs::{
    count_coset_difference, count_theta_case, fiber_compose, Coset, CosetCountSpec, FieldPoly, Guarded, ThetaGuard,
    ThetaPart, VFPolynomial, VectorTerm, VectorTermSpec, VsParams,
};
use pfdim::{count_with, EngineConfig};

const VECTORS: usize = 3;

fn brute(space: &VectorSpace, f: &Formula, p: &VsParams) -> BigUint {
    let m = common::vector_structure(space);
    count_with(f, &m, &p.assignment(), &["u"], &EngineConfig::default().with_workers(1))
        .unwrap()
        .into_value()
}

fn random_coeff<R: Rng>(rng: &mut R) -> FieldPoly {
    match rng.gen_range(0..6) {
        0 => FieldPoly::param(1),
        1 => FieldPoly::parse("y1 + 1").unwrap(),
        2 => FieldPoly::parse("2*y1^2 - 1").unwrap(),
        _ => FieldPoly::constant(rng.gen_range(-2..=2)),
    }
}

fn random_term<R: Rng>(rng: &mut R) -> VectorTerm {
    VectorTerm::new((0..VECTORS).map(|_| random_coeff(rng)).collect())
}

fn random_space<R: Rng>(rng: &mut R) -> VectorSpace {
    VectorSpace::new([2, 3][rng.gen_range(0..2)], rng.gen_range(2..=4)).unwrap()
}

fn random_params<R: Rng>(rng: &mut R, space: &VectorSpace) -> VsParams {
    // small ids make dependent configurations common
    let top = if rng.gen_bool(0.5) { space.size().min(4) } else { space.size() };
    VsParams {
        vectors: (0..VECTORS).map(|_| rng.gen_range(0..top)).collect(),
        scalars: vec![rng.gen_range(0..space.q() as u8)],
    }
}

proptest! {
    #![proptest_config(common::config(300, 0x5eed_0020))]

    #[test]
    fn theta_cases_match_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = random_space(&mut rng);
        let shifted = rng.gen_range(1..=2);
        let fixed = rng.gen_range(0..=2);
        let spec = VectorTermSpec {
            shifted: (0..shifted).map(|_| random_term(&mut rng)).collect(),
            fixed: (0..fixed).map(|_| random_term(&mut rng)).collect(),
        };
        let p = random_params(&mut rng, &space);
        let c = count_theta_case(&space, &spec, &p).unwrap();
        prop_assert_eq!(&c.count, &brute(&space, &spec.to_formula(&space, ThetaPart::Whole), &p));
        prop_assert_eq!(&c.first, &brute(&space, &spec.to_formula(&space, ThetaPart::First), &p));
        prop_assert_eq!(&c.second, &brute(&space, &spec.to_formula(&space, ThetaPart::Second), &p));
        prop_assert_eq!(c.polynomial.evaluate_at(space.q(), space.dim()), Some(c.count.clone()));
        prop_assert_eq!(ThetaGuard::all().iter().filter(|g| g.holds(&space, &spec, &p)).count(), 1);
    }

    #[test]
    fn coset_differences_match_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = random_space(&mut rng);
        let coset = |rng: &mut ChaCha8Rng| Coset {
            offset: if rng.gen_bool(0.3) { VectorTerm::default() } else { random_term(rng) },
            span: (0..rng.gen_range(0..=2)).map(|_| random_term(rng)).collect(),
        };
        let spec = CosetCountSpec {
            include: (0..rng.gen_range(0..=2)).map(|_| coset(&mut rng)).collect(),
            exclude: (0..rng.gen_range(0..=2)).map(|_| coset(&mut rng)).collect(),
        };
        let p = random_params(&mut rng, &space);
        let c = count_coset_difference(&space, &spec, &p).unwrap();
        prop_assert_eq!(&c.count, &brute(&space, &spec.to_formula(&space), &p));
        prop_assert_eq!(c.polynomial.evaluate_at(space.q(), space.dim()), Some(c.count));
    }

    #[test]
    fn fiber_composition_partitions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // guard (k, r) holds at s when s = r mod k
        let outer: Vec<Guarded<(u32, u32)>> = (0..rng.gen_range(1..=3))
            .map(|i| Guarded { poly: VFPolynomial::f_pow(i), guard: (1, 0) })
            .collect();
        let inner: Vec<Vec<Guarded<(u32, u32)>>> = outer
            .iter()
            .map(|_| {
                let k = rng.gen_range(1..=3);
                (0..k).map(|r| Guarded { poly: &VFPolynomial::v() - &VFPolynomial::f_pow(r), guard: (k, r) }).collect()
            })
            .collect();
        let samples: Vec<u32> = (0..36).collect();
        let holds = |g: &(u32, u32), s: &u32| s % g.0 == g.1;
        let out = fiber_compose(&outer, &inner, &samples, holds).unwrap();
        let bound: usize = inner.iter().map(Vec::len).product::<usize>() * outer.len();
        prop_assert!(out.len() <= bound);
        for s in &samples {
            let hits = out.iter().filter(|g| g.guard.iter().all(|c| holds(c, s))).count();
            prop_assert_eq!(hits, 1);
        }
    }
}

#[test]
fn overlapping_inner_guards_are_rejected() {
    let g = |k, r| Guarded { poly: VFPolynomial::one(), guard: (k, r) };
    let samples: Vec<u32> = (0..6).collect();
    let holds = |g: &(u32, u32), s: &u32| s % g.0 == g.1;
    assert!(fiber_compose(&[g(1, 0)], &[vec![g(1, 0), g(2, 0)]], &samples, holds).is_err());
    assert!(fiber_compose(&[g(1, 0)], &[vec![g(2, 1)]], &samples, holds).is_err());
}
