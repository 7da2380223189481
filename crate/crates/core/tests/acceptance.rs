//! Acceptance report. Prints one line per criterion and exits nonzero when a
//! gated criterion fails. Criterion 7 is reported without gating and
//! criterion 8 is a declared scope limit.

use std::process::ExitCode;
use std::time::Instant;

use qcomb::choi_verify::{
    choi_from_blocks, full_space_fidelity, haar_fidelity_mc, performance_operator, random_comb_choi,
    random_feasible_blocks, verify_lemma_partial_trace,
};
use qcomb::circuit_synth::{verify_theorem1, verify_theorem_covariant, CovariantModel};
use qcomb::haar::seeded_rng;
use qcomb::param_comb::{count_parameters, optimize, OptimizeOptions};
use qcomb::sdp_solver::solve;
use qcomb::{ChainSpec, CoefficientBlocks, CombModel, LegKind, SolveStatus, SolverOptions, Task};

const SDP_TOL: f64 = 1e-5;
const SDP_SECONDS: f64 = 60.0;
const NLOPT_BELOW: f64 = 1e-4;
const NLOPT_ABOVE: f64 = 1e-6;
const NLOPT_SECONDS: f64 = 600.0;
const ALGEBRA_TOL: f64 = 1e-10;
const THEOREM_TOL: f64 = 1e-7;
const COVARIANT_TOL: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-9;
const MC_SAMPLES: usize = 10_000;
const MC_FLOOR: f64 = 1e-9;
const POINTWISE_TOL: f64 = 1e-6;
const POINTWISE_SAMPLES: usize = 1_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn sdp_optimum(model: &CombModel) -> (CoefficientBlocks, f64, SolveStatus) {
    let problem = model.assemble_sdp().expect("assemble");
    let sol = solve(&problem, &SolverOptions::default());
    let blocks = model.blocks_from_solution(&sol.x);
    let f = model.fidelity(&blocks);
    (blocks, f, sol.status)
}

fn criterion_1() -> Outcome {
    use Task::*;
    let cells: &[(Task, usize, usize, f64)] = &[
        (Transpose, 2, 1, 0.5),
        (Transpose, 2, 2, 0.75),
        (Transpose, 2, 3, 0.9330125),
        (Transpose, 2, 4, 1.0),
        (Transpose, 3, 1, 0.222222),
        (Transpose, 3, 2, 0.407407),
        (Transpose, 3, 3, 0.626596),
        (Transpose, 4, 2, 0.218750),
        (Invert, 2, 1, 0.5),
        (Invert, 2, 2, 0.75),
        (Invert, 2, 3, 0.9330125),
        (Invert, 2, 4, 1.0),
        (Invert, 3, 2, 0.333333),
        (Invert, 3, 3, 0.444444),
        (Invert, 3, 4, 0.555555),
        (Invert, 5, 1, 0.08),
        (Invert, 5, 2, 0.12),
        (Invert, 5, 3, 0.16),
        (Invert, 5, 4, 0.2),
    ];
    let mut worst = 0.0_f64;
    let mut slowest = 0.0_f64;
    let mut bad = Vec::new();
    for &(task, d, n, expected) in cells {
        let t = Instant::now();
        let model = CombModel::new(task, d, n).expect("model");
        let (_, f, status) = sdp_optimum(&model);
        let secs = t.elapsed().as_secs_f64();
        let err = (f - expected).abs();
        worst = worst.max(err);
        slowest = slowest.max(secs);
        if err > SDP_TOL || secs > SDP_SECONDS || status != SolveStatus::Optimal {
            bad.push(format!("{task} d={d} n={n}: {f:.7} vs {expected} ({status:?}, {secs:.1}s)"));
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{} cells, max |dF| {worst:.1e} (tol {SDP_TOL:.0e}), slowest {slowest:.1}s (limit {SDP_SECONDS}s){}",
            cells.len(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join("; ")) }
        ),
    }
}

fn criterion_2() -> Outcome {
    use Task::*;
    let cells = [(Transpose, 2, 1), (Transpose, 2, 2), (Transpose, 2, 3), (Transpose, 3, 1), (Transpose, 3, 2), (Invert, 3, 1), (Invert, 3, 2), (Invert, 3, 3)];
    let mut bad = Vec::new();
    let mut worst_below = 0.0_f64;
    let mut worst_above = 0.0_f64;
    let mut slowest = 0.0_f64;
    for (task, d, n) in cells {
        let (_, sdp, _) = sdp_optimum(&CombModel::new(task, d, n).expect("model"));
        let t = Instant::now();
        let cell = optimize(task, d, n, &OptimizeOptions { restarts: 32, seed: 0, ..Default::default() }).expect("optimize");
        let secs = t.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let f = cell.result.fidelity;
        worst_below = worst_below.max(sdp - f);
        worst_above = worst_above.max(f - sdp);
        if f < sdp - NLOPT_BELOW || f > sdp + NLOPT_ABOVE || secs > NLOPT_SECONDS {
            bad.push(format!("{task} d={d} n={n}: {f:.9} vs SDP {sdp:.9}"));
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{} cells, 32 restarts, max shortfall {worst_below:.1e} (tol {NLOPT_BELOW:.0e}), max excess {worst_above:.1e} (tol {NLOPT_ABOVE:.0e}), slowest {slowest:.1}s{}",
            cells.len(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join("; ")) }
        ),
    }
}

fn all_chains(max_legs: usize) -> Vec<Vec<LegKind>> {
    let mut out = Vec::new();
    for len in 1..=max_legs {
        for mask in 0..(1u32 << len) {
            out.push((0..len).map(|i| if mask >> i & 1 == 1 { LegKind::ConjDefining } else { LegKind::Defining }).collect());
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0_f64;
    let mut count = 0;
    let mut bad = Vec::new();
    for d in [2, 3] {
        for legs in all_chains(4) {
            let spec = ChainSpec::new(d, legs.clone()).expect("chain");
            let r = verify_lemma_partial_trace(&spec, 11).expect("algebra report").max_residual();
            worst = worst.max(r);
            count += 1;
            if r > ALGEBRA_TOL {
                bad.push(format!("d={d} {legs:?}: {r:.1e}"));
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{count} chains, max residual {worst:.1e} (tol {ALGEBRA_TOL:.0e}){}",
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join("; ")) }
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0_f64;
    let mut bad = Vec::new();
    let mut rng = seeded_rng(2024);
    for task in [Task::Transpose, Task::Invert] {
        for (d, n) in [(2, 1), (2, 2), (3, 1)] {
            let model = CombModel::new(task, d, n).expect("model");
            let mut cases = vec![("depolarizing".to_string(), model.depolarizing_blocks())];
            cases.push(("sdp optimum".to_string(), sdp_optimum(&model).0));
            for i in 0..10 {
                cases.push((format!("random {i}"), random_feasible_blocks(&model, 1 + i % 4, &mut rng).expect("random")));
            }
            for (name, blocks) in cases {
                match verify_theorem1(&model, &blocks) {
                    Ok(r) => {
                        worst = worst.max(r.residual);
                        if r.residual > THEOREM_TOL {
                            bad.push(format!("{task} d={d} n={n} {name}: {:.1e}", r.residual));
                        }
                    }
                    Err(e) => bad.push(format!("{task} d={d} n={n} {name}: {e}")),
                }
            }
        }
    }
    let cov = CovariantModel::unitary_covariant(2, 2).expect("covariant model");
    let mut cov_worst = 0.0_f64;
    let mut tops = vec![cov.depolarizing_blocks()];
    for m in 1..=3 {
        tops.push(cov.random_feasible_blocks(m, &mut rng).expect("random"));
    }
    for top in &tops {
        match verify_theorem_covariant(&cov, top) {
            Ok(r) => cov_worst = cov_worst.max(r.residual),
            Err(e) => bad.push(format!("covariant: {e}")),
        }
    }
    if cov_worst > COVARIANT_TOL {
        bad.push(format!("covariant residual {cov_worst:.1e}"));
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "72 block sets, max residual {worst:.1e} (tol {THEOREM_TOL:.0e}); covariant d=2 n=1 max {cov_worst:.1e} (tol {COVARIANT_TOL:.0e}){}",
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join("; ")) }
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0_f64;
    let mut rng = seeded_rng(5);
    let mut points = 0;
    for task in [Task::Transpose, Task::Invert] {
        for (d, n) in [(2, 1), (2, 2), (3, 1)] {
            let model = CombModel::new(task, d, n).expect("model");
            let omega = performance_operator(task, d, n).expect("omega");
            for i in 0..10 {
                let blocks = random_feasible_blocks(&model, 1 + i % 3, &mut rng).expect("random");
                let full = full_space_fidelity(&choi_from_blocks(&model, &blocks).expect("choi"), &omega).expect("oracle");
                worst = worst.max((full - model.fidelity(&blocks)).abs());
                points += 1;
            }
        }
    }
    Outcome { pass: worst <= ORACLE_TOL, detail: format!("{points} points, max |reduced - Tr(C Omega)| {worst:.1e} (tol {ORACLE_TOL:.0e})") }
}

fn criterion_6() -> Outcome {
    let mut bad = Vec::new();
    let mut worst_ratio = 0.0_f64;
    let mut rng = seeded_rng(6);
    for task in [Task::Transpose, Task::Invert] {
        for n in [1, 2] {
            let model = CombModel::new(task, 2, n).expect("model");
            let omega = performance_operator(task, 2, n).expect("omega");
            let symmetric = choi_from_blocks(&model, &sdp_optimum(&model).0).expect("choi");
            let random = random_comb_choi(2, n, 2, &mut rng).expect("random comb");
            for (name, c) in [("sdp optimum", symmetric), ("random comb", random)] {
                let exact = full_space_fidelity(&c, &omega).expect("oracle");
                let est = haar_fidelity_mc(&c, task, n, MC_SAMPLES, 99).expect("mc");
                let diff = (est.mean - exact).abs();
                let bound = 3.0 * est.stderr + MC_FLOOR;
                worst_ratio = worst_ratio.max(diff / bound);
                if diff > bound {
                    bad.push(format!("{task} n={n} {name}: {:.6} vs {exact:.6} (stderr {:.1e})", est.mean, est.stderr));
                }
            }
        }
    }
    let model = CombModel::new(Task::Transpose, 2, 4).expect("model");
    let c = choi_from_blocks(&model, &sdp_optimum(&model).0).expect("choi");
    let est = haar_fidelity_mc(&c, Task::Transpose, 4, POINTWISE_SAMPLES, 7).expect("mc");
    if est.min < 1.0 - POINTWISE_TOL {
        bad.push(format!("transpose d=2 n=4 minimum pointwise fidelity {:.9}", est.min));
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{MC_SAMPLES} samples, worst |mean - Tr(C Omega)| / (3 stderr + {MC_FLOOR:.0e}) = {worst_ratio:.2} (limit 1); transpose d=2 n=4 min pointwise {:.9} over {POINTWISE_SAMPLES} unitaries (limit 1 - {POINTWISE_TOL:.0e}){}",
            est.min,
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join("; ")) }
        ),
    }
}

fn criterion_7() -> Outcome {
    use Task::*;
    let cells = [(Transpose, 2, 1, 10), (Transpose, 2, 2, 26), (Transpose, 3, 1, 15), (Invert, 3, 1, 12), (Transpose, 3, 2, 49), (Invert, 3, 2, 42)];
    let mut deltas = Vec::new();
    for (task, d, n, expected) in cells {
        let got = count_parameters(task, d, n).expect("count") as i64;
        if got != expected {
            deltas.push(format!("{task} d={d} n={n}: {got} vs {expected} ({:+})", got - expected));
        }
    }
    Outcome {
        pass: deltas.is_empty(),
        detail: if deltas.is_empty() {
            format!("{} cells match", cells.len())
        } else {
            format!(
                "{} of {} cells match; no single counting convention reconciles the rest: {}",
                cells.len() - deltas.len(),
                cells.len(),
                deltas.join("; ")
            )
        },
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let gated: [(u8, fn() -> Outcome); 6] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6)];
    let mut gated_failures = 0;
    for (k, f) in gated {
        let t = Instant::now();
        let o = f();
        if !o.pass {
            gated_failures += 1;
        }
        println!("criterion {k}: {} [{:.1}s] {}", if o.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64(), o.detail);
    }
    let o = criterion_7();
    println!("criterion 7: {} (not gating) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    println!(
        "criterion 8: DECLARED not reproduced at desk scale: transpose d=3 n=6,7, all d>=4 with n>=5 and the largest naive-count cells"
    );
    if gated_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
