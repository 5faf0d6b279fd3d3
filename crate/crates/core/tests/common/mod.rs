#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use proptest::test_runner::{Config, RngSeed};
use rand::Rng;

use pfdim::families::VectorSpace;
use pfdim::logic::{free_variables, FiniteStructure, Formula, Signature, Term};

pub fn config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

/// One sort S with E/2, P/1, Q/1, f/1 and a constant c.
pub fn signature() -> Arc<Signature> {
    Arc::new(
        Signature::builder()
            .sort("S")
            .relation("E", &["S", "S"])
            .relation("P", &["S"])
            .relation("Q", &["S"])
            .function("f", &["S"], "S")
            .constant("c", "S")
            .build()
            .unwrap(),
    )
}

pub fn random_structure<R: Rng>(rng: &mut R, n: u32) -> FiniteStructure {
    let density: f64 = rng.gen_range(0.05..0.6);
    let mut e = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if rng.gen_bool(density) {
                e.push(vec![a, b]);
            }
        }
    }
    let p: Vec<Vec<u32>> = (0..n).filter(|_| rng.gen_bool(0.5)).map(|a| vec![a]).collect();
    let q: Vec<Vec<u32>> = (0..n).filter(|_| rng.gen_bool(0.3)).map(|a| vec![a]).collect();
    let f: Vec<Vec<u32>> = (0..n).map(|a| vec![a, rng.gen_range(0..n)]).collect();
    FiniteStructure::builder(signature(), vec![n])
        .relation_tuples("E", e)
        .relation_tuples("P", p)
        .relation_tuples("Q", q)
        .function_rows("f", f)
        .constant("c", rng.gen_range(0..n))
        .build()
        .unwrap()
}

fn random_term<R: Rng>(rng: &mut R, vars: &[String]) -> Term {
    match rng.gen_range(0..6) {
        0 => Term::constant("c"),
        1 => Term::app("f", vec![random_term(rng, vars)]),
        _ => Term::var(&vars[rng.gen_range(0..vars.len())], "S"),
    }
}

/// A formula whose free variables are drawn from `vars`; quantifiers bind
/// fresh `z<k>` while `quantifiers` allows.
pub fn random_formula<R: Rng>(rng: &mut R, vars: &[&str], depth: u32, quantifiers: u32) -> Formula {
    let vars: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
    go(rng, &vars, depth, quantifiers, 0)
}

fn go<R: Rng>(rng: &mut R, vars: &[String], depth: u32, quantifiers: u32, fresh: u32) -> Formula {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        return match rng.gen_range(0..4) {
            0 => Formula::rel("E", vec![random_term(rng, vars), random_term(rng, vars)]),
            1 => Formula::rel("P", vec![random_term(rng, vars)]),
            2 => Formula::rel("Q", vec![random_term(rng, vars)]),
            _ => Formula::eq(random_term(rng, vars), random_term(rng, vars)),
        };
    }
    match rng.gen_range(0..5) {
        0 => go(rng, vars, depth - 1, quantifiers, fresh).not(),
        1 => go(rng, vars, depth - 1, quantifiers, fresh).and(go(rng, vars, depth - 1, quantifiers, fresh)),
        2 => go(rng, vars, depth - 1, quantifiers, fresh).or(go(rng, vars, depth - 1, quantifiers, fresh)),
        3 => go(rng, vars, depth - 1, quantifiers, fresh).implies(go(rng, vars, depth - 1, quantifiers, fresh)),
        _ if quantifiers > 0 => {
            let z = format!("z{fresh}");
            let mut inner = vars.to_vec();
            inner.push(z.clone());
            let body = go(rng, &inner, depth - 1, quantifiers - 1, fresh + 1);
            if rng.gen_bool(0.5) {
                Formula::exists(&z, "S", body)
            } else {
                Formula::forall(&z, "S", body)
            }
        }
        _ => go(rng, vars, depth - 1, quantifiers, fresh).not(),
    }
}

/// Conjoins `v = v` for each of `vars` not free in `f`, so the engine can count them.
pub fn pad(f: Formula, vars: &[&str]) -> Formula {
    let free = free_variables(&f);
    vars.iter().fold(f, |acc, v| {
        if free.iter().any(|(n, _)| n == v) {
            acc
        } else {
            acc.and(Formula::eq(Term::var(v, "S"), Term::var(v, "S")))
        }
    })
}

/// Generated vector-space structures by (q, dim); the larger θ tables take a while to build.
pub fn vector_structure(space: &VectorSpace) -> Arc<FiniteStructure> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, u32), Arc<FiniteStructure>>>> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap();
    cache
        .entry((space.q(), space.dim()))
        .or_insert_with(|| Arc::new(space.structure()))
        .clone()
}
