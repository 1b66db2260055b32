use criterion::{criterion_group, criterion_main, Criterion};
use polycouple::couplers::{heisenberg_couple, monomial_cycle, CouplerConfig};
use polycouple::{CoupledState, MonomialIndex, NoiseStream};

fn start(idx: MonomialIndex, n: u32) -> CoupledState {
    let mut s = CoupledState::origin(n).unwrap();
    s.set_integral(idx, 1.0, 0.0).unwrap();
    s
}

fn coupling(c: &mut Criterion) {
    let mut group = c.benchmark_group("couple");
    group.sample_size(20);

    let cfg = CouplerConfig::heisenberg();
    let mut id = 0;
    group.bench_function("heisenberg_replica", |b| {
        b.iter(|| {
            id += 1;
            let mut s = start(MonomialIndex::new(1, 0), 1);
            heisenberg_couple(&mut s, &cfg, &mut NoiseStream::new(3, id)).unwrap()
        });
    });

    let cfg = CouplerConfig::monomial(2);
    let idx = MonomialIndex::new(2, 0);
    let mut id = 0;
    group.bench_function("monomial_cycle_2_0", |b| {
        b.iter(|| {
            id += 1;
            let mut s = start(idx, 2);
            monomial_cycle(&mut s, idx, &cfg, &mut NoiseStream::new(4, id)).unwrap()
        });
    });
    group.finish();
}

criterion_group!(benches, coupling);
criterion_main!(benches);
