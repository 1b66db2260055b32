use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use polycouple::{CoupledState, NoiseStream, StepMode};

const STEPS: u64 = 1_000;

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.throughput(Throughput::Elements(STEPS));
    for n in 1..=4 {
        for (label, mode) in [("sync", StepMode::Synchronous), ("reflect", StepMode::Reflection)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, &n| {
                let mut stream = NoiseStream::new(1, 0);
                let mut s = CoupledState::new(n, 0.1, -0.2, 0.3, 0.3).unwrap();
                b.iter(|| {
                    for _ in 0..STEPS {
                        s.step(mode, 1e-4, &mut stream).unwrap();
                    }
                });
            });
        }
    }
    group.finish();
}

criterion_group!(benches, stepping);
criterion_main!(benches);
