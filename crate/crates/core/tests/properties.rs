use num_complex::Complex64;
use proptest::prelude::*;
use qcomb::choi_verify::{check_comb_conditions, random_comb_choi};
use qcomb::haar::seeded_rng;
use qcomb::param_comb::ParamModel;
use qcomb::rep_theory::weyl_dim;
use qcomb::sdp_solver::solve;
use qcomb::{BratteliDiagram, ChainSpec, CombModel, LegKind, SolverOptions, Task};

fn legs() -> impl Strategy<Value = Vec<LegKind>> {
    prop::collection::vec(prop_oneof![Just(LegKind::Defining), Just(LegKind::ConjDefining)], 1..=5)
}

fn small_cell() -> impl Strategy<Value = (Task, usize, usize)> {
    prop_oneof![
        Just((Task::Transpose, 2, 1)),
        Just((Task::Transpose, 2, 2)),
        Just((Task::Invert, 2, 2)),
        Just((Task::Transpose, 3, 1)),
        Just((Task::Invert, 3, 2)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// `Σ_λ d_λ m_λ = d^k` at every level, with `m_λ` the number of paths.
    #[test]
    fn schur_weyl_dimension_count(d in 2usize..=4, legs in legs()) {
        let diagram = BratteliDiagram::build(&ChainSpec::new(d, legs.clone()).unwrap());
        for level in 0..=legs.len() {
            let total: u64 = (0..diagram.levels[level].len())
                .map(|v| weyl_dim(diagram.label(level, v)) * diagram.paths_at(level, v).len() as u64)
                .sum();
            prop_assert_eq!(total, (d as u64).pow(level as u32));
        }
    }

    #[test]
    fn random_combs_meet_the_conditions(d in 2usize..=3, n in 1usize..=2, memory in 1usize..=4, seed in any::<u64>()) {
        prop_assume!(d.pow(2 * (n as u32 + 1)) <= 729);
        let c = random_comb_choi(d, n, memory, &mut seeded_rng(seed)).unwrap();
        let report = check_comb_conditions(&c, n).unwrap();
        prop_assert!(report.max_residual() < 1e-10, "{:?}", report);
    }

    #[test]
    fn induced_blocks_are_combs(cell in small_cell(), seed in any::<u64>()) {
        let (task, d, n) = cell;
        let pm = ParamModel::new(task, d, n).unwrap();
        let p = pm.random_point(&mut seeded_rng(seed));
        let blocks = pm.induced_blocks(&p).unwrap();
        prop_assert!(pm.model.comb_residual(&blocks) < 1e-10);
        prop_assert!(blocks.min_eigenvalue() > -1e-10);
        let f = pm.fidelity(&p).unwrap();
        prop_assert!((f - pm.model.fidelity(&blocks)).abs() < 1e-12);
    }

    /// Directional derivative along a random ambient direction against central differences.
    #[test]
    fn gradient_matches_central_differences(cell in small_cell(), seed in any::<u64>()) {
        let (task, d, n) = cell;
        let pm = ParamModel::new(task, d, n).unwrap();
        let mut rng = seeded_rng(seed);
        let p = pm.random_point(&mut rng);
        let dir = pm.random_point(&mut rng);
        let (_, g) = pm.fidelity_and_gradient(&p).unwrap();
        let analytic: f64 = g
            .iter()
            .zip(&dir.blocks)
            .map(|(gb, db)| gb.iter().zip(db.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>())
            .sum();
        let h = 1e-5;
        let shifted = |s: f64| {
            let mut q = p.clone();
            for (qb, db) in q.blocks.iter_mut().zip(&dir.blocks) {
                *qb += db * Complex64::new(s, 0.0);
            }
            pm.fidelity(&q).unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        prop_assert!((fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()), "{} vs {}", fd, analytic);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn optimizer_is_deterministic(seed in any::<u64>()) {
        let pm = ParamModel::new(Task::Transpose, 2, 2).unwrap();
        let a = pm.ascend(pm.random_point(&mut seeded_rng(seed)), 1e-9, 200);
        let b = pm.ascend(pm.random_point(&mut seeded_rng(seed)), 1e-9, 200);
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        prop_assert_eq!(a.4, b.4);
    }
}

#[test]
fn sdp_solution_is_deterministic() {
    let model = CombModel::new(Task::Invert, 3, 2).unwrap();
    let problem = model.assemble_sdp().unwrap();
    let a = solve(&problem, &SolverOptions::default());
    let b = solve(&problem, &SolverOptions::default());
    assert_eq!(a.primal_objective.to_bits(), b.primal_objective.to_bits());
    assert_eq!(a.x, b.x);
}
