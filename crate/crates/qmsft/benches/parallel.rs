use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qmsft::models::wcd_generator;
use qmsft::norms::{amalgamated_norm, NormQuery};
use qmsft::par;
use qmsft::qms::{build_generator, Picture};
use qmsft::random;
use qmsft::structure::analyze;

fn norm_samples(c: &mut Criterion) {
    let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
    let ce = analyze(&gen).unwrap();
    let n = 32;
    let work = |i: usize| {
        let mut rng = random::substream(7, i as u64);
        let x = random::positive_definite(ce.dim(), 0.01, &mut rng);
        amalgamated_norm(&NormQuery::new(&x, 2.0, 4.0, &ce)).unwrap().value
    };
    let mut group = c.benchmark_group("amalgamated_norm_wcd2");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
        b.iter(|| par::map_indexed(n, work))
    });
    group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
        b.iter(|| par::map_indexed_seq(n, work))
    });
    group.finish();
}

fn flows(c: &mut Criterion) {
    let gen = build_generator(&wcd_generator(3).unwrap()).unwrap();
    let d = gen.dim();
    let n = 64;
    let work = |i: usize| {
        let mut rng = random::substream(11, i as u64);
        let rho = random::density(d, &mut rng);
        gen.flow(0.5 + 0.01 * i as f64, &rho, Picture::Schrodinger)
    };
    let mut group = c.benchmark_group("flow_wcd3");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
        b.iter(|| par::map_indexed(n, work))
    });
    group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
        b.iter(|| par::map_indexed_seq(n, work))
    });
    group.finish();
}

criterion_group!(benches, norm_samples, flows);
criterion_main!(benches);
