use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pfdim::families::{word_image, FamilyHandle, FiniteGroup, WordExpr};
use pfdim::parser::parse_formula;
use pfdim::{Assignment, EngineConfig};

/// Sequential, then a fixed parallel width, then every available core.
fn worker_counts() -> Vec<usize> {
    let mut out = vec![1, 4];
    let all = EngineConfig::default().workers;
    if all > 4 {
        out.push(all);
    }
    out
}

fn engine(c: &mut Criterion) {
    let fam = FamilyHandle::named("earlyexample").unwrap();
    let m = fam.generate(8).unwrap();
    let f = parse_formula("exists z:S. E(x,z) & E(z,y) & !(x = z)", m.signature()).unwrap();
    let mut group = c.benchmark_group("count_xy_earlyexample_8");
    group.sample_size(20);
    for w in worker_counts() {
        let cfg = EngineConfig::default().with_workers(w);
        group.bench_with_input(BenchmarkId::new("workers", w), &cfg, |b, cfg| {
            b.iter(|| pfdim::count_with(black_box(&f), &m, &Assignment::new(), &["x", "y"], cfg).unwrap())
        });
    }
    group.finish();
}

fn words(c: &mut Criterion) {
    let g = FiniteGroup::psl27();
    let w = WordExpr::parse("[x,y]").unwrap();
    let mut group = c.benchmark_group("commutator_image_psl27");
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::new("workers", workers), &workers, |b, &workers| {
            b.iter(|| word_image(black_box(&w), &g, workers).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, engine, words);
criterion_main!(benches);
