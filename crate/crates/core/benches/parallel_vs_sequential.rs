use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qergo_core::ccp::ccp_table_with;
use qergo_core::transform::dephase_monte_carlo;
use qergo_core::weak::simulate_weak_value_with;
use qergo_core::{Basis, Execution, WeakConfig};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn tables(c: &mut Criterion) {
    let mut group = c.benchmark_group("ccp_table");
    for d in [8usize, 32] {
        let (m, a, b) = (Basis::haar_random(d, 1).unwrap(), Basis::haar_random(d, 2).unwrap(), Basis::haar_random(d, 3).unwrap());
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, d), &d, |bch, _| {
                bch.iter(|| ccp_table_with(black_box(&m), &a, &b, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn weak(c: &mut Criterion) {
    let mut group = c.benchmark_group("weak_value");
    group.sample_size(10);
    let (z, x, y) = (Basis::pauli('z').unwrap(), Basis::pauli('x').unwrap(), Basis::pauli('y').unwrap());
    let cfg = WeakConfig { coupling: 0.05, shots: 1_000_000, seed: 42 };
    for (name, exec) in MODES {
        group.bench_function(name, |bch| {
            bch.iter(|| simulate_weak_value_with((&z, 0), (&x, 0), &y, 0, black_box(&cfg), exec).unwrap())
        });
    }
    group.finish();
}

fn dephasing(c: &mut Criterion) {
    let mut group = c.benchmark_group("dephase_monte_carlo");
    group.sample_size(10);
    let d = 6;
    let table = ccp_table_with(&Basis::haar_random(d, 4).unwrap(), &Basis::haar_random(d, 5).unwrap(), &Basis::haar_random(d, 6).unwrap(), Execution::Sequential).unwrap();
    for (name, exec) in MODES {
        group.bench_function(name, |bch| bch.iter(|| dephase_monte_carlo(&table, 0, 1, black_box(200_000), 9, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, tables, weak, dephasing);
criterion_main!(benches);
