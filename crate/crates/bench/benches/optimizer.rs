use criterion::{criterion_group, criterion_main, Criterion};
use qcomb::haar::seeded_rng;
use qcomb::param_comb::ParamModel;
use qcomb_bench::{cell_name, OPTIMIZER_CELLS};

fn gradient_and_ascent(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimizer");
    group.sample_size(10);
    for &(task, d, n) in OPTIMIZER_CELLS {
        let model = ParamModel::new(task, d, n).unwrap();
        let point = model.random_point(&mut seeded_rng(7));
        group.bench_function(format!("gradient_{}", cell_name(task, d, n)), |b| {
            b.iter(|| model.fidelity_and_gradient(&point).unwrap())
        });
        group.bench_function(format!("ascent_{}", cell_name(task, d, n)), |b| {
            b.iter(|| model.ascend(point.clone(), 1e-9, 5000))
        });
    }
    group.finish();
}

criterion_group!(benches, gradient_and_ascent);
criterion_main!(benches);
