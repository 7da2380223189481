use qcomb::choi_verify::{
    check_comb_conditions, choi_from_blocks, full_space_fidelity, identity_point_fidelity, performance_operator,
    project_to_blocks, random_feasible_blocks,
};
use qcomb::circuit_synth::{build_comb_vector, isometries_from_coefficients};
use qcomb::haar::seeded_rng;
use qcomb::sdp_solver::{check_kkt, sdpa, solve};
use qcomb::{CombModel, SolveStatus, SolverOptions, Task};

const CELLS: [(Task, usize, usize); 5] =
    [(Task::Transpose, 2, 1), (Task::Transpose, 2, 2), (Task::Invert, 2, 2), (Task::Transpose, 3, 1), (Task::Invert, 3, 1)];

/// A comb that discards its inputs and outputs the maximally mixed state
/// realizes the completely depolarizing channel, whose channel fidelity with
/// any unitary is `1/d²`.
#[test]
fn depolarizing_comb_has_fidelity_one_over_d_squared() {
    for (task, d, n) in CELLS {
        let model = CombModel::new(task, d, n).unwrap();
        let blocks = model.depolarizing_blocks();
        let expected = 1.0 / (d * d) as f64;
        assert!((model.fidelity(&blocks) - expected).abs() < 1e-12);
        let omega = performance_operator(task, d, n).unwrap();
        let c = choi_from_blocks(&model, &blocks).unwrap();
        assert!((full_space_fidelity(&c, &omega).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn choi_trace_is_d_to_the_number_of_inputs() {
    let mut rng = seeded_rng(1);
    for (task, d, n) in CELLS {
        let model = CombModel::new(task, d, n).unwrap();
        let blocks = random_feasible_blocks(&model, 2, &mut rng).unwrap();
        let c = choi_from_blocks(&model, &blocks).unwrap();
        let expected = (d as f64).powi(n as i32 + 1);
        assert!((c.trace().re - expected).abs() < 1e-9 * expected);
        assert!(check_comb_conditions(&c, n).unwrap().max_residual() < 1e-10);
    }
}

#[test]
fn projection_inverts_assembly() {
    let mut rng = seeded_rng(2);
    for (task, d, n) in CELLS {
        let model = CombModel::new(task, d, n).unwrap();
        let blocks = random_feasible_blocks(&model, 3, &mut rng).unwrap();
        let back = project_to_blocks(&model, &choi_from_blocks(&model, &blocks).unwrap()).unwrap();
        for (a, b) in blocks.blocks.iter().zip(&back.blocks) {
            assert!((a - b).iter().all(|z| z.norm() < 1e-10));
        }
    }
}

/// For a symmetric comb the pointwise fidelity is constant, so its value at
/// the identity equals the Haar average.
#[test]
fn identity_point_matches_average_for_symmetric_combs() {
    let mut rng = seeded_rng(3);
    for (task, d, n) in CELLS {
        let model = CombModel::new(task, d, n).unwrap();
        let blocks = random_feasible_blocks(&model, 2, &mut rng).unwrap();
        let c = choi_from_blocks(&model, &blocks).unwrap();
        assert!((identity_point_fidelity(&c, task, n).unwrap() - model.fidelity(&blocks)).abs() < 1e-10);
    }
}

#[test]
fn sdpa_round_trip_preserves_the_optimum() {
    let model = CombModel::new(Task::Transpose, 2, 2).unwrap();
    let problem = model.assemble_sdp().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t22.dat-s");
    sdpa::export_sdpa(&problem, &path).unwrap();
    let back = sdpa::import_sdpa(&path).unwrap();
    let opts = SolverOptions::default();
    let a = solve(&problem, &opts);
    let b = solve(&back, &opts);
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!((a.primal_objective - b.primal_objective).abs() < 1e-9);
    assert!(check_kkt(&back, &b).max_violation() < 1e-6);
}

/// The circuit rebuilt from the SDP optimum attains the same fidelity when
/// evaluated with the full-space oracle.
#[test]
fn circuit_from_optimum_keeps_the_fidelity() {
    for (task, d, n) in [(Task::Transpose, 2, 2), (Task::Invert, 3, 1)] {
        let model = CombModel::new(task, d, n).unwrap();
        let sol = solve(&model.assemble_sdp().unwrap(), &SolverOptions::default());
        let blocks = model.blocks_from_solution(&sol.x);
        let circuit = isometries_from_coefficients(&model, &blocks).unwrap();
        let rebuilt = build_comb_vector(&model, &circuit).unwrap().reduced_choi().unwrap();
        let omega = performance_operator(task, d, n).unwrap();
        let f = full_space_fidelity(&rebuilt, &omega).unwrap();
        assert!((f - model.fidelity(&blocks)).abs() < 1e-8, "{f}");
    }
}
