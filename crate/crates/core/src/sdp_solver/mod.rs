//! Dense block-diagonal primal-dual interior-point solver.
//!
//! Infeasible-start path following with the HKM search direction and a
//! Mehrotra predictor-corrector step. Constraint matrices are kept sparse;
//! primal, dual and slack blocks are dense.

mod problem;
pub mod sdpa;

pub use problem::{SdpProblem, SparseSym, SymEntry};

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{sym_eigen, RMat};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
    pub regularization: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, step_fraction: 0.98, regularization: 1e-12, verbose: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
    Infeasible,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<RMat>,
    /// Dual multipliers, one per original constraint (zero for dropped ones).
    pub y: Vec<f64>,
    pub z: Vec<RMat>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub dropped_constraints: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KktReport {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub min_eig_x: f64,
    pub min_eig_z: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.gap)
            .max(-self.min_eig_x)
            .max(-self.min_eig_z)
    }
}

/// Recomputes every optimality residual of `sol` against the original problem.
/// The primal residual is relative to `1 + ||b||`, the dual one to `1 + ||C||`.
pub fn check_kkt(problem: &SdpProblem, sol: &SdpSolution) -> KktReport {
    let b_norm = problem.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = problem.objective.norm();
    let rp = problem
        .constraints
        .iter()
        .zip(&problem.rhs)
        .map(|(a, b)| (a.inner(&sol.x) - b).powi(2))
        .sum::<f64>()
        .sqrt();
    // Z = sum_i y_i A_i - C for the maximization form.
    let mut rd = problem.zero_blocks();
    for (a, yi) in problem.constraints.iter().zip(&sol.y) {
        a.add_to(&mut rd, *yi);
    }
    problem.objective.add_to(&mut rd, -1.0);
    let mut rd_norm = 0.0;
    for (r, z) in rd.iter().zip(&sol.z) {
        rd_norm += (r - z).norm_squared();
    }
    let pobj = problem.objective.inner(&sol.x);
    let dobj: f64 = problem.rhs.iter().zip(&sol.y).map(|(b, y)| b * y).sum();
    let min_eig = |blocks: &[RMat]| {
        blocks
            .iter()
            .filter(|m| m.nrows() > 0)
            .map(|m| sym_eigen(m).0[0])
            .fold(f64::INFINITY, f64::min)
    };
    KktReport {
        primal_residual: rp / (1.0 + b_norm),
        dual_residual: rd_norm.sqrt() / (1.0 + c_norm),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        min_eig_x: min_eig(&sol.x),
        min_eig_z: min_eig(&sol.z),
        primal_objective: pobj,
        dual_objective: dobj,
    }
}

/// Indices of a maximal linearly independent subset of the (normalized)
/// constraints, found by pivoted Cholesky of their Gram matrix.
fn independent_rows(rows: &[SparseSym], tol: f64) -> Vec<usize> {
    let m = rows.len();
    if m == 0 {
        return Vec::new();
    }
    let mut by_entry: std::collections::HashMap<(usize, usize, usize), Vec<(usize, f64)>> =
        std::collections::HashMap::new();
    for (i, a) in rows.iter().enumerate() {
        for &(b, r, c, v) in &a.entries {
            let w = if r == c { v } else { v * std::f64::consts::SQRT_2 };
            by_entry.entry((b, r, c)).or_default().push((i, w));
        }
    }
    let mut gram = RMat::zeros(m, m);
    let mut keys: Vec<_> = by_entry.keys().copied().collect();
    keys.sort();
    for k in keys {
        let list = &by_entry[&k];
        for &(i, vi) in list {
            for &(j, vj) in list {
                gram[(i, j)] += vi * vj;
            }
        }
    }
    let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    let mut diag: Vec<f64> = (0..m).map(|i| gram[(i, i)]).collect();
    let mut factors: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    let mut used = vec![false; m];
    loop {
        let (best, val) = diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if best == usize::MAX || val <= tol * scale {
            break;
        }
        used[best] = true;
        let piv = val.sqrt();
        let mut col = vec![0.0; m];
        for j in 0..m {
            if used[j] && j != best {
                continue;
            }
            let mut s = gram[(j, best)];
            for f in &factors {
                s -= f[j] * f[best];
            }
            col[j] = s / piv;
        }
        for j in 0..m {
            if !used[j] {
                diag[j] -= col[j] * col[j];
            }
        }
        factors.push(col);
        chosen.push(best);
    }
    chosen.sort_unstable();
    chosen
}

struct Prepared {
    sizes: Vec<usize>,
    c: Vec<RMat>,
    rows: Vec<SparseSym>,
    b: Vec<f64>,
    /// For each block: `(constraint, entries)` touching it.
    per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    kept: Vec<usize>,
    scales: Vec<f64>,
}

fn prepare(problem: &SdpProblem) -> Prepared {
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut scales = Vec::new();
    let mut origin = Vec::new();
    for (i, (a, rhs)) in problem.constraints.iter().zip(&problem.rhs).enumerate() {
        let mut a = a.clone();
        a.normalize();
        let n = a.norm();
        if n == 0.0 {
            continue;
        }
        a.scale(1.0 / n);
        rows.push(a);
        b.push(rhs / n);
        scales.push(1.0 / n);
        origin.push(i);
    }
    let keep = independent_rows(&rows, 1e-10);
    let rows: Vec<SparseSym> = keep.iter().map(|&i| rows[i].clone()).collect();
    let b: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
    let scales: Vec<f64> = keep.iter().map(|&i| scales[i]).collect();
    let kept: Vec<usize> = keep.iter().map(|&i| origin[i]).collect();
    let mut per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); problem.block_sizes.len()];
    for (i, a) in rows.iter().enumerate() {
        let mut cur: Option<(usize, Vec<(usize, usize, f64)>)> = None;
        for &(blk, r, c, v) in &a.entries {
            match &mut cur {
                Some((cb, list)) if *cb == blk => list.push((r, c, v)),
                _ => {
                    if let Some((cb, list)) = cur.take() {
                        per_block[cb].push((i, list));
                    }
                    cur = Some((blk, vec![(r, c, v)]));
                }
            }
        }
        if let Some((cb, list)) = cur {
            per_block[cb].push((i, list));
        }
    }
    // Internally the solver minimizes <-C, X>.
    let c = problem.objective.to_dense(&problem.block_sizes).into_iter().map(|m| -m).collect();
    Prepared { sizes: problem.block_sizes.clone(), c, rows, b, per_block, kept, scales }
}

fn apply_a(p: &Prepared, x: &[RMat]) -> Vec<f64> {
    p.rows.iter().map(|a| a.inner(x)).collect()
}

fn apply_at(p: &Prepared, y: &[f64]) -> Vec<RMat> {
    let mut out: Vec<RMat> = p.sizes.iter().map(|&n| RMat::zeros(n, n)).collect();
    for (a, yi) in p.rows.iter().zip(y) {
        a.add_to(&mut out, *yi);
    }
    out
}

fn inner(a: &[RMat], b: &[RMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: RMat) -> RMat {
    (&m + m.transpose()) * 0.5
}

/// Largest `α ≤ 1 / fraction`-scaled step keeping `X + α dX ⪰ 0`.
fn max_step(x: &[RMat], dx: &[RMat]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        if xb.nrows() == 0 {
            continue;
        }
        let chol = Cholesky::new(xb.clone())?;
        let l = chol.l();
        let linv = l.clone().try_inverse()?;
        let w = &linv * db * linv.transpose();
        let lmin = sym_eigen(&w).0[0];
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Some(alpha)
}

fn schur_matrix(p: &Prepared, x: &[RMat], zinv: &[RMat]) -> RMat {
    let m = p.rows.len();
    let mut schur = RMat::zeros(m, m);
    for (blk, cons) in p.per_block.iter().enumerate() {
        if cons.is_empty() {
            continue;
        }
        let n = p.sizes[blk];
        let xb = &x[blk];
        let zb = &zinv[blk];
        let rows: Vec<Vec<(usize, f64)>> = cons
            .par_iter()
            .map(|(_, entries)| {
                let g = if entries.len() * 2 > n {
                    let mut a = RMat::zeros(n, n);
                    for &(r, c, v) in entries {
                        a[(r, c)] += v;
                        if r != c {
                            a[(c, r)] += v;
                        }
                    }
                    xb * a * zb
                } else {
                    let mut g = RMat::zeros(n, n);
                    for &(r, c, v) in entries {
                        g.ger(v, &xb.column(r), &zb.row(c).transpose(), 1.0);
                        if r != c {
                            g.ger(v, &xb.column(c), &zb.row(r).transpose(), 1.0);
                        }
                    }
                    g
                };
                cons.iter()
                    .map(|(j, ej)| {
                        let s: f64 = ej
                            .iter()
                            .map(|&(r, c, v)| if r == c { v * g[(r, r)] } else { v * (g[(r, c)] + g[(c, r)]) })
                            .sum();
                        (*j, s)
                    })
                    .collect()
            })
            .collect();
        for ((i, _), row) in cons.iter().zip(rows) {
            for (j, s) in row {
                schur[(*i, j)] += s;
            }
        }
    }
    schur
}

struct Iterate {
    x: Vec<RMat>,
    y: Vec<f64>,
    z: Vec<RMat>,
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap: f64,
    pinf: f64,
    dinf: f64,
}

impl Metrics {
    fn worst(&self) -> f64 {
        self.gap.max(self.pinf).max(self.dinf)
    }
}

fn metrics(p: &Prepared, it: &Iterate, b_norm: f64, c_norm: f64) -> (Metrics, Vec<f64>, Vec<RMat>) {
    let ax = apply_a(p, &it.x);
    let rp: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let aty = apply_at(p, &it.y);
    let rd: Vec<RMat> = p.c.iter().zip(&it.z).zip(&aty).map(|((c, z), a)| c - z - a).collect();
    let pobj = inner(&p.c, &it.x);
    let dobj: f64 = p.b.iter().zip(&it.y).map(|(b, y)| b * y).sum();
    let m = Metrics {
        pobj,
        dobj,
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        pinf: rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm),
        dinf: rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + c_norm),
    };
    (m, rp, rd)
}

/// Solves the problem in maximization form.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let p = prepare(problem);
    let dropped: Vec<usize> = (0..problem.constraints.len()).filter(|i| !p.kept.contains(i)).collect();
    let nblocks = p.sizes.len();
    let total: usize = p.sizes.iter().sum();
    let m = p.rows.len();
    let b_norm = p.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = p.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();

    let mut it = {
        let mut x = Vec::with_capacity(nblocks);
        let mut z = Vec::with_capacity(nblocks);
        for (blk, &n) in p.sizes.iter().enumerate() {
            let sqn = (n as f64).sqrt();
            let mut xi: f64 = 10f64.max(sqn);
            let mut eta: f64 = 10f64.max(sqn).max(p.c[blk].norm());
            for (i, entries) in &p.per_block[blk] {
                let an = entries.iter().map(|e| if e.0 == e.1 { e.2 * e.2 } else { 2.0 * e.2 * e.2 }).sum::<f64>().sqrt();
                xi = xi.max(sqn * (1.0 + p.b[*i].abs()) / (1.0 + an));
                eta = eta.max(an);
            }
            x.push(RMat::identity(n, n) * xi);
            z.push(RMat::identity(n, n) * eta);
        }
        Iterate { x, y: vec![0.0; m], z }
    };

    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut best: Option<(f64, Vec<RMat>, Vec<f64>, Vec<RMat>)> = None;
    let mut prev_pinf = f64::INFINITY;
    let mut stall = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let (met, _rp, rd) = metrics(&p, &it, b_norm, c_norm);
        if opts.verbose {
            eprintln!(
                "{iter:3} pobj {:+.10e} dobj {:+.10e} gap {:.2e} pinf {:.2e} dinf {:.2e}",
                -met.pobj, -met.dobj, met.gap, met.pinf, met.dinf
            );
        }
        if best.as_ref().is_none_or(|b| met.worst() < b.0) {
            best = Some((met.worst(), it.x.clone(), it.y.clone(), it.z.clone()));
        }
        if met.worst() <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        if met.pinf > 0.5 * prev_pinf.min(1.0) && met.gap > 1e3 {
            stall += 1;
            if stall > 20 {
                status = SolveStatus::Infeasible;
                break;
            }
        } else {
            stall = 0;
        }
        prev_pinf = met.pinf;

        let mu = inner(&it.x, &it.z) / total as f64;
        let zinv: Option<Vec<RMat>> = it
            .z
            .iter()
            .map(|z| if z.nrows() == 0 { Some(z.clone()) } else { Cholesky::new(z.clone()).map(|c| c.inverse()) })
            .collect();
        let Some(zinv) = zinv else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let schur = schur_matrix(&p, &it.x, &zinv);
        let diag_max = (0..m).map(|i| schur[(i, i)]).fold(0.0_f64, f64::max).max(1.0);
        let mut regularized = schur.clone();
        for i in 0..m {
            regularized[(i, i)] += opts.regularization * diag_max;
        }
        let Some(chol) = Cholesky::new(regularized) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let x_rd_zinv: Vec<RMat> = (0..nblocks).map(|k| &it.x[k] * &rd[k] * &zinv[k]).collect();
        let a_xrdz = apply_a(&p, &x_rd_zinv);

        let direction = |rc: &[RMat]| -> (Vec<RMat>, Vec<f64>, Vec<RMat>) {
            let rc_zinv: Vec<RMat> = (0..nblocks).map(|k| &rc[k] * &zinv[k]).collect();
            let a_rcz = apply_a(&p, &rc_zinv);
            let h = nalgebra::DVector::from_iterator(m, (0..m).map(|i| p.b[i] - a_rcz[i] + a_xrdz[i]));
            let mut dy = chol.solve(&h);
            for _ in 0..3 {
                let r = &h - &schur * &dy;
                dy += chol.solve(&r);
            }
            let dy: Vec<f64> = dy.iter().copied().collect();
            let at_dy = apply_at(&p, &dy);
            let dz: Vec<RMat> = (0..nblocks).map(|k| &rd[k] - &at_dy[k]).collect();
            let dx: Vec<RMat> = (0..nblocks)
                .map(|k| sym(&rc_zinv[k] - &it.x[k] - &it.x[k] * &dz[k] * &zinv[k]))
                .collect();
            (dx, dy, dz)
        };

        let zero_rc: Vec<RMat> = p.sizes.iter().map(|&n| RMat::zeros(n, n)).collect();
        let (dxa, _, dza) = direction(&zero_rc);
        let (Some(ap), Some(ad)) = (max_step(&it.x, &dxa), max_step(&it.z, &dza)) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..nblocks {
            mu_aff += (&it.x[k] + &dxa[k] * ap).dot(&(&it.z[k] + &dza[k] * ad));
        }
        mu_aff /= total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let rc: Vec<RMat> = (0..nblocks)
            .map(|k| RMat::identity(p.sizes[k], p.sizes[k]) * (sigma * mu) - &dxa[k] * &dza[k])
            .collect();
        let (dx, dy, dz) = direction(&rc);
        let (Some(ap), Some(ad)) = (max_step(&it.x, &dx), max_step(&it.z, &dz)) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        for k in 0..nblocks {
            it.x[k] += &dx[k] * ap;
            it.x[k] = sym(it.x[k].clone());
            it.z[k] += &dz[k] * ad;
            it.z[k] = sym(it.z[k].clone());
        }
        for i in 0..m {
            it.y[i] += ad * dy[i];
        }
    }

    let (x, y_int, z) = if status == SolveStatus::Optimal {
        (it.x, it.y, it.z)
    } else {
        let (_, x, y, z) = best.expect("at least one iterate was evaluated");
        (x, y, z)
    };
    // Map back to the maximization form: Z = sum_i y_i A_i - C with y = -y_int (rescaled).
    let mut y = vec![0.0; problem.constraints.len()];
    for (k, &orig) in p.kept.iter().enumerate() {
        y[orig] = -y_int[k] * p.scales[k];
    }
    let mut sol = SdpSolution {
        status,
        x,
        y,
        z,
        primal_objective: 0.0,
        dual_objective: 0.0,
        gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations,
        dropped_constraints: dropped,
    };
    let report = check_kkt(problem, &sol);
    sol.primal_objective = report.primal_objective;
    sol.dual_objective = report.dual_objective;
    sol.gap = report.gap;
    sol.primal_residual = report.primal_residual;
    sol.dual_residual = report.dual_residual;
    sol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_trace_problem() {
        let mut obj = SparseSym::new();
        obj.push(0, 0, 0, -1.0);
        let mut a = SparseSym::new();
        a.push(0, 0, 0, 1.0);
        let prob = SdpProblem { block_sizes: vec![1], objective: obj, constraints: vec![a], rhs: vec![1.0] };
        let sol = solve(&prob, &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0][(0, 0)] - 1.0).abs() < 1e-7);
        assert!((sol.primal_objective + 1.0).abs() < 1e-7);
    }

    #[test]
    fn max_eigenvalue_problem() {
        // max <C, X> with Tr X = 1 gives the largest eigenvalue of C.
        let mut obj = SparseSym::new();
        obj.push(0, 0, 0, 2.0);
        obj.push(0, 0, 1, 1.0);
        obj.push(0, 1, 1, 2.0);
        let mut a = SparseSym::new();
        a.push(0, 0, 0, 1.0);
        a.push(0, 1, 1, 1.0);
        let prob = SdpProblem { block_sizes: vec![2], objective: obj, constraints: vec![a.clone(), a], rhs: vec![1.0, 1.0] };
        let sol = solve(&prob, &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.dropped_constraints, vec![1]);
        assert!((sol.primal_objective - 3.0).abs() < 1e-7);
        let kkt = check_kkt(&prob, &sol);
        assert!(kkt.max_violation() < 1e-7, "{kkt:?}");
    }

    #[test]
    fn kkt_detects_perturbation() {
        let mut obj = SparseSym::new();
        obj.push(0, 0, 0, 1.0);
        let mut a = SparseSym::new();
        a.push(0, 0, 0, 1.0);
        a.push(0, 1, 1, 1.0);
        let prob = SdpProblem { block_sizes: vec![2], objective: obj, constraints: vec![a], rhs: vec![1.0] };
        let mut sol = solve(&prob, &SolverOptions::default());
        assert!(check_kkt(&prob, &sol).max_violation() < 1e-7);
        for x in &mut sol.x {
            *x += RMat::identity(2, 2) * 1e-3;
        }
        assert!(check_kkt(&prob, &sol).primal_residual > 1e-4);
    }
}
