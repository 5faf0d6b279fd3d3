mod common;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfdim::families::{word_image, FamilyHandle, FiniteGroup, Homocyclic, VectorSpace, WordExpr};

fn big(n: u64) -> BigUint {
    BigUint::from(n)
}

fn power_sum(n: u64) -> BigUint {
    (1..=n as u32).map(|i| big(n).pow(i)).sum()
}

#[test]
fn universe_sizes_follow_closed_forms() {
    let size = |name: &str, i: u64| FamilyHandle::named(name).unwrap().universe_size(i).unwrap();
    for k in 1..=40 {
        assert_eq!(size("earlyexample", k), big(k * (k + 1) * (2 * k + 1) / 6), "k = {k}");
    }
    for n in [1, 2, 3, 5, 8, 16, 32, 64] {
        assert_eq!(size("stablenonattainability", n), power_sum(n), "n = {n}");
        assert_eq!(size("findelta", n), big(n) * power_sum(n), "n = {n}");
        assert_eq!(size("rank2classes", n), big(2 * n * n), "n = {n}");
        assert_eq!(size("convsupersimple", n), big(n).pow(n as u32), "n = {n}");
    }
}

#[test]
fn nested_predicates_have_the_quoted_sizes() {
    let fam = FamilyHandle::named("convsupersimple").unwrap();
    for n in 2..=5u64 {
        let m = fam.generate(n).unwrap();
        for i in 1..=n {
            let (idx, _) = m.signature().relation(&format!("P{i}")).unwrap();
            let tuples = m.relation_tuples(idx, u64::MAX).unwrap();
            assert_eq!(tuples.len() as u64, n.pow((n - i) as u32), "n = {n}, i = {i}");
        }
    }
}

/// Independence by trying every nontrivial combination.
fn independent_by_combinations(space: &VectorSpace, vs: &[u32]) -> bool {
    let q = space.q() as u64;
    (1..q.pow(vs.len() as u32)).all(|code| {
        let mut c = code;
        let sum = vs.iter().fold(0, |acc, &v| {
            let s = (c % q) as u8;
            c /= q;
            space.add(acc, space.scale(s, v))
        });
        sum != 0
    })
}

proptest! {
    #![proptest_config(common::config(300, 0x5eed_0030))]

    #[test]
    fn theta_is_linear_independence(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = [2, 3, 4, 5][rng.gen_range(0..4)];
        let dim = rng.gen_range(1..=3);
        let space = VectorSpace::new(q, dim).unwrap();
        let m = common::vector_structure(&space);
        let n = rng.gen_range(1..=dim);
        let vs: Vec<u32> = (0..n).map(|_| rng.gen_range(0..space.size())).collect();
        let theta = m.holds(&format!("theta{n}"), &vs).unwrap();
        prop_assert_eq!(theta, space.rank(&vs) == n as usize);
        if q != 4 {
            // prime fields only: scalar codes are residues
            prop_assert_eq!(theta, independent_by_combinations(&space, &vs));
        }
    }
}

#[test]
fn homocyclic_tables_are_groups() {
    for (p, n, m) in [(2, 1, 1), (2, 3, 2), (3, 2, 1), (2, 2, 3), (3, 1, 3), (5, 1, 2), (2, 6, 1), (7, 2, 1)] {
        let g = Homocyclic::new(p, n, m).unwrap();
        let order = g.order() as u32;
        assert!(order <= 64);
        for a in 0..order {
            assert_eq!(g.add(a, 0), a);
            assert_eq!(g.add(a, g.neg(a)), 0);
            for b in 0..order {
                assert_eq!(g.add(a, b), g.add(b, a));
                for c in 0..order {
                    assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
                }
            }
        }
        let fg = FiniteGroup::from_structure(&g.structure()).unwrap();
        fg.check_axioms().unwrap();
    }
}

#[test]
fn single_variable_word_images_are_normal() {
    for name in ["C6", "C15", "S3", "S4", "A4", "A5", "PSL27"] {
        let g = FiniteGroup::builtin(name).unwrap();
        for w in ["x*x", "x^3", "x^5", "x^-1 * x^4"] {
            let img = word_image(&WordExpr::parse(w).unwrap(), &g, 2).unwrap();
            let mut member = vec![false; g.order()];
            img.iter().for_each(|&x| member[x as usize] = true);
            for &x in &img {
                for by in 0..g.order() as u32 {
                    assert!(member[g.conjugate(x, by) as usize], "{w} on {name}");
                }
            }
        }
    }
}
