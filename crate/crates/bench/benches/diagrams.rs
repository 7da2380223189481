use criterion::{criterion_group, criterion_main, Criterion};
use qcomb::rep_theory::chain_for_task;
use qcomb::{CombModel, Task};

fn diagrams_and_models(c: &mut Criterion) {
    let mut group = c.benchmark_group("diagrams");
    for (d, n) in [(3, 4), (5, 4), (7, 4)] {
        group.bench_function(format!("bratteli_transpose_d{d}_n{n}"), |b| {
            b.iter(|| chain_for_task(Task::Transpose, d, n).unwrap())
        });
    }
    group.sample_size(10);
    for (d, n) in [(2, 3), (3, 2)] {
        group.bench_function(format!("model_transpose_d{d}_n{n}"), |b| {
            b.iter(|| CombModel::new(Task::Transpose, d, n).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, diagrams_and_models);
criterion_main!(benches);
