use criterion::{criterion_group, criterion_main, Criterion};
use qcomb::sdp_solver::solve;
use qcomb::{CombModel, SolverOptions};
use qcomb_bench::{cell_name, SDP_CELLS};

fn assemble_and_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("sdp");
    group.sample_size(10);
    for &(task, d, n) in SDP_CELLS {
        let model = CombModel::new(task, d, n).unwrap();
        group.bench_function(format!("assemble_{}", cell_name(task, d, n)), |b| b.iter(|| model.assemble_sdp().unwrap()));
        let problem = model.assemble_sdp().unwrap();
        let opts = SolverOptions::default();
        group.bench_function(format!("solve_{}", cell_name(task, d, n)), |b| b.iter(|| solve(&problem, &opts)));
    }
    group.finish();
}

criterion_group!(benches, assemble_and_solve);
criterion_main!(benches);
