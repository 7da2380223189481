//! Full-space checks on explicit Choi matrices.
//!
//! Everything here works on dense operators over `(C^d)^{⊗2(n+1)}` and is
//! meant as an independent oracle for the reduced computations. Leg order is
//! carried explicitly on every [`ChoiMatrix`] and every reshuffle goes through
//! [`ChoiMatrix::permuted`].

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comb_sdp::{CoefficientBlocks, CombModel};
use crate::error::{CombError, Result};
use crate::haar::{haar_isometry, haar_unitary, seeded_rng};
use crate::linalg::{digits, from_digits, leg_permutation_map, sym_pinv, CMat, RMat};
use crate::matrix_units::PathBasis;
use crate::rep_theory::{task_legs, weyl_dim, BratteliDiagram, ChainSpec, LegKind, Task};

/// Default largest total dimension for which dense full-space operators are built.
pub const MAX_FULL_DIM: usize = 4096;

static FULL_DIM_LIMIT: AtomicUsize = AtomicUsize::new(MAX_FULL_DIM);

/// Changes the process-wide dimension limit enforced by the full-space routines.
pub fn set_full_dim_limit(limit: usize) {
    FULL_DIM_LIMIT.store(limit, Ordering::Relaxed);
}

pub fn full_dim_limit() -> usize {
    FULL_DIM_LIMIT.load(Ordering::Relaxed)
}

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// A named tensor leg of a comb Choi matrix. `I(i)` and `O(i)` are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    I(usize),
    F,
    P,
    O(usize),
}

/// The output leg `I_k` of stage `k`, with `I_{n+1} = F`.
pub fn output_leg(k: usize, n: usize) -> Leg {
    if k == n + 1 {
        Leg::F
    } else {
        Leg::I(k)
    }
}

/// The input leg consumed by stage `k + 1`, with `O_0 = P`.
pub fn input_leg(k: usize) -> Leg {
    if k == 0 {
        Leg::P
    } else {
        Leg::O(k)
    }
}

/// `(I_1..I_n, F, P, O_1..O_n)`.
pub fn standard_legs(n: usize) -> Vec<Leg> {
    (1..=n + 1).map(|k| output_leg(k, n)).chain((0..=n).map(input_leg)).collect()
}

#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    pub d: usize,
    pub legs: Vec<Leg>,
    pub data: CMat,
}

impl ChoiMatrix {
    pub fn new(d: usize, legs: Vec<Leg>, data: CMat) -> Result<Self> {
        let dim = d.pow(legs.len() as u32);
        if data.nrows() != dim || data.ncols() != dim {
            return Err(CombError::DimensionMismatch(format!(
                "{} legs of dimension {d} need a {dim}x{dim} matrix, got {}x{}",
                legs.len(),
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { d, legs, data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn position(&self, leg: Leg) -> Option<usize> {
        self.legs.iter().position(|&l| l == leg)
    }

    fn positions(&self, legs: &[Leg]) -> Result<Vec<usize>> {
        legs.iter()
            .map(|&l| self.position(l).ok_or_else(|| CombError::InvalidArgument(format!("leg {l:?} not present"))))
            .collect()
    }

    /// The same operator with its legs reordered to `order`.
    pub fn permuted(&self, order: &[Leg]) -> Result<Self> {
        if order.len() != self.legs.len() {
            return Err(CombError::InvalidArgument("permutation must list every leg once".into()));
        }
        let pos = self.positions(order)?;
        let mut target = vec![usize::MAX; pos.len()];
        for (new, &old) in pos.iter().enumerate() {
            if target[old] != usize::MAX {
                return Err(CombError::InvalidArgument("repeated leg in permutation".into()));
            }
            target[old] = new;
        }
        let map = leg_permutation_map(self.d, &target);
        let dim = self.dim();
        let mut inv = vec![0; dim];
        for (x, &y) in map.iter().enumerate() {
            inv[y] = x;
        }
        let data = CMat::from_fn(dim, dim, |r, c| self.data[(inv[r], inv[c])]);
        Ok(Self { d: self.d, legs: order.to_vec(), data })
    }

    /// Partial trace over `traced`; the remaining legs keep their relative order.
    pub fn partial_trace(&self, traced: &[Leg]) -> Result<Self> {
        let tr = self.positions(traced)?;
        let k = self.legs.len();
        let keep: Vec<usize> = (0..k).filter(|p| !tr.contains(p)).collect();
        let d = self.d;
        let stride = |p: usize| d.pow((k - 1 - p) as u32);
        let offsets = |set: &[usize]| -> Vec<usize> {
            (0..d.pow(set.len() as u32))
                .map(|x| {
                    let ds = digits(x, d, set.len());
                    set.iter().zip(&ds).map(|(&p, &v)| v * stride(p)).sum()
                })
                .collect()
        };
        let keep_off = offsets(&keep);
        let tr_off = offsets(&tr);
        let m = keep_off.len();
        let data = CMat::from_fn(m, m, |r, c| {
            tr_off.iter().map(|&t| self.data[(keep_off[r] + t, keep_off[c] + t)]).sum()
        });
        Ok(Self { d, legs: keep.iter().map(|&p| self.legs[p]).collect(), data })
    }

    /// `self ⊗ 1_leg`, with the new leg appended last.
    pub fn tensor_identity(&self, leg: Leg) -> Self {
        let id = CMat::identity(self.d, self.d);
        let mut legs = self.legs.clone();
        legs.push(leg);
        Self { d: self.d, legs, data: self.data.kronecker(&id) }
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.data - self.data.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        crate::linalg::min_eigenvalue_herm(&self.data)
    }

    /// `(⊗_j W_j) C (⊗_j W_j)^†` with one `d × d` matrix per leg, applied leg by leg.
    pub fn conjugate_local(&self, local: &[CMat]) -> CMat {
        let mut m = self.data.clone();
        for (p, w) in local.iter().enumerate() {
            m = apply_leg_left(&m, w, p, self.legs.len(), self.d);
            m = apply_leg_left(&m.adjoint(), w, p, self.legs.len(), self.d).adjoint();
        }
        m
    }
}

/// `(1 ⊗ .. ⊗ W ⊗ .. ⊗ 1) M` with `W` acting on leg `p` of `k`.
fn apply_leg_left(m: &CMat, w: &CMat, p: usize, k: usize, d: usize) -> CMat {
    let stride = d.pow((k - 1 - p) as u32);
    let dim = m.nrows();
    let mut out = CMat::zeros(dim, m.ncols());
    for r in 0..dim {
        let digit = (r / stride) % d;
        let base = r - digit * stride;
        for a in 0..d {
            let coef = w[(digit, a)];
            if coef == C0 {
                continue;
            }
            let src = base + a * stride;
            for c in 0..m.ncols() {
                out[(r, c)] += coef * m[(src, c)];
            }
        }
    }
    out
}

/// Columns `U_S ⊗ Ũ_Q` of one top block, ordered by `(S, Q, i, j)`.
fn block_frame(model: &CombModel, b: usize) -> RMat {
    let k = model.n + 1;
    let blk = &model.top().blocks[b];
    let us = model.basis_l.isometries_at(k, blk.left);
    let uq = model.basis_r.isometries_at(k, blk.right);
    let (dl, dm) = (us[0].ncols(), uq[0].ncols());
    let (rl, rr) = (us[0].nrows(), uq[0].nrows());
    let mut y = RMat::zeros(rl * rr, blk.size() * dl * dm);
    for (s, u) in us.iter().enumerate() {
        for (q, w) in uq.iter().enumerate() {
            let base = blk.index(s, q) * dl * dm;
            for i in 0..dl {
                for j in 0..dm {
                    let col = base + i * dm + j;
                    for x in 0..rl {
                        let ux = u[(x, i)];
                        if ux == 0.0 {
                            continue;
                        }
                        for z in 0..rr {
                            y[(x * rr + z, col)] = ux * w[(z, j)];
                        }
                    }
                }
            }
        }
    }
    y
}

fn full_dim(model: &CombModel) -> usize {
    model.d.pow(2 * (model.n as u32 + 1))
}

pub(crate) fn guard(dim: usize) -> Result<()> {
    let limit = full_dim_limit();
    if dim > limit {
        return Err(CombError::TooLarge(format!("full-space dimension {dim} exceeds {limit}")));
    }
    Ok(())
}

/// `C = Σ c^{λμ}_{(S,Q),(S',Q')} E^λ_{SS'}/d_λ ⊗ Ẽ^μ_{QQ'}/d_μ`.
pub fn choi_from_blocks(model: &CombModel, blocks: &CoefficientBlocks) -> Result<ChoiMatrix> {
    let dim = full_dim(model);
    guard(dim)?;
    if blocks.blocks.len() != model.top().blocks.len() {
        return Err(CombError::DimensionMismatch("block count does not match the model".into()));
    }
    let mut c = CMat::zeros(dim, dim);
    for (b, x) in blocks.blocks.iter().enumerate() {
        if x.nrows() == 0 || x.iter().all(|z| *z == C0) {
            continue;
        }
        let (dl, dm) = model.block_dims(b);
        let inner = (dl * dm) as usize;
        let y = block_frame(model, b).map(|v| Complex64::new(v, 0.0));
        let mut yx = CMat::zeros(dim, y.ncols());
        for a in 0..x.nrows() {
            for a2 in 0..x.ncols() {
                let v = x[(a, a2)];
                if v == C0 {
                    continue;
                }
                for t in 0..inner {
                    let mut dst = yx.column_mut(a2 * inner + t);
                    dst.axpy(v, &y.column(a * inner + t), C1);
                }
            }
        }
        c += yx * y.transpose() * Complex64::new(1.0 / (dl * dm) as f64, 0.0);
    }
    ChoiMatrix::new(model.d, standard_legs(model.n), c)
}

/// Coefficients `c_{a,a'} = Tr(C (E_{S'S} ⊗ Ẽ_{Q'Q}))`, the orthogonal projection
/// of `C` onto the symmetric subspace.
pub fn project_to_blocks(model: &CombModel, c: &ChoiMatrix) -> Result<CoefficientBlocks> {
    let c = c.permuted(&standard_legs(model.n))?;
    let mut out = Vec::with_capacity(model.top().blocks.len());
    for (b, blk) in model.top().blocks.iter().enumerate() {
        let (dl, dm) = model.block_dims(b);
        let inner = (dl * dm) as usize;
        let y = block_frame(model, b).map(|v| Complex64::new(v, 0.0));
        let m = y.transpose() * &c.data * &y;
        out.push(CMat::from_fn(blk.size(), blk.size(), |a, a2| {
            (0..inner).map(|t| m[(a * inner + t, a2 * inner + t)]).sum()
        }));
    }
    Ok(CoefficientBlocks { blocks: out })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CombReport {
    pub min_eigenvalue: f64,
    pub hermiticity: f64,
    /// `max_k ||Tr_{I_k} C_k − C_{k−1} ⊗ 1_{O_{k−1}}||_max`.
    pub marginal_residual: f64,
    pub normalization_residual: f64,
}

impl CombReport {
    pub fn max_residual(&self) -> f64 {
        self.marginal_residual.max(self.normalization_residual).max(self.hermiticity).max(-self.min_eigenvalue)
    }
}

/// Comb conditions for the ordering `P → I_1 → O_1 → … → O_n → F`.
pub fn check_comb_conditions(c: &ChoiMatrix, n: usize) -> Result<CombReport> {
    let d = c.d as f64;
    let mut marginal = 0.0_f64;
    let mut ck = c.permuted(&standard_legs(n))?;
    for k in (1..=n + 1).rev() {
        let out = output_leg(k, n);
        let last_in = input_leg(k - 1);
        let lhs = ck.partial_trace(&[out])?;
        let lower = ck.partial_trace(&[out, last_in])?;
        let lower = ChoiMatrix { data: lower.data / Complex64::new(d, 0.0), ..lower };
        let rhs = lower.tensor_identity(last_in).permuted(&lhs.legs)?;
        marginal = marginal.max((&lhs.data - &rhs.data).iter().fold(0.0_f64, |m, z| m.max(z.norm())));
        ck = lower;
    }
    let normalization = (ck.data[(0, 0)] - C1).norm();
    Ok(CombReport {
        min_eigenvalue: c.min_eigenvalue(),
        hermiticity: c.hermiticity_residual(),
        marginal_residual: marginal,
        normalization_residual: normalization,
    })
}

/// The single-leg action of a group element for a leg kind.
fn leg_action(u: &CMat, kind: LegKind) -> CMat {
    match kind {
        LegKind::Defining => u.clone(),
        LegKind::ConjDefining => u.conjugate(),
    }
}

/// Largest `||[C, W_L(V) ⊗ W_R(U)]||_F` over random Haar pairs, where the leg
/// actions follow the task's diagrams: `V^{⊗n} ⊗ V̄` and `Ū ⊗ U^{⊗n}` for
/// transposition, all defining for inversion.
pub fn check_symmetry(c: &ChoiMatrix, task: Task, n: usize, samples: usize, seed: u64) -> Result<f64> {
    let c = c.permuted(&standard_legs(n))?;
    let (lk, rk) = task_legs(task, n);
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let v = haar_unitary(c.d, &mut rng);
        let u = haar_unitary(c.d, &mut rng);
        let local: Vec<CMat> =
            lk.iter().map(|&k| leg_action(&v, k)).chain(rk.iter().map(|&k| leg_action(&u, k))).collect();
        let rotated = c.conjugate_local(&local);
        worst = worst.max(crate::linalg::frob_c(&(rotated - &c.data)));
    }
    Ok(worst)
}

/// The target map `f(U)`: `U^T` for transposition and `U^†` for inversion.
pub fn target_unitary(task: Task, u: &CMat) -> CMat {
    match task {
        Task::Transpose => u.transpose(),
        Task::Invert => u.adjoint(),
    }
}

/// Vector `w(U)` on `(I.., F, P, O..)` with `w = Π_k Ū[o_k, i_k] · f(U)[F, P]`,
/// so that the channel fidelity of the output is `w^† C w / d²`.
fn link_vector(u: &CMat, f: &CMat, n: usize) -> DVector<Complex64> {
    let d = u.nrows();
    let k = 2 * (n + 1);
    let dim = d.pow(k as u32);
    let ub = u.conjugate();
    DVector::from_fn(dim, |x, _| {
        let ds = digits(x, d, k);
        let mut v = f[(ds[n], ds[n + 1])];
        for j in 0..n {
            v *= ub[(ds[n + 2 + j], ds[j])];
        }
        v
    })
}

/// Channel fidelity between the comb's output on `U` and `f(U)`.
pub fn pointwise_fidelity(c: &ChoiMatrix, task: Task, n: usize, u: &CMat) -> Result<f64> {
    let c = c.permuted(&standard_legs(n))?;
    Ok(pointwise_standard(&c, task, n, u))
}

fn pointwise_standard(c: &ChoiMatrix, task: Task, n: usize, u: &CMat) -> f64 {
    let w = link_vector(u, &target_unitary(task, u), n);
    let d2 = (c.d * c.d) as f64;
    w.column(0).dotc(&(&c.data * &w).column(0)).re / d2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of the Haar-averaged channel fidelity. Sample `i`
/// uses its own generator seeded from `(seed, i)`, so the result does not
/// depend on the thread count.
pub fn haar_fidelity_mc(c: &ChoiMatrix, task: Task, n: usize, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(CombError::InvalidArgument("at least one sample is needed".into()));
    }
    guard(c.dim())?;
    let c = c.permuted(&standard_legs(n))?;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let u = haar_unitary(c.d, &mut rng);
            pointwise_standard(&c, task, n, &u)
        })
        .collect();
    let mean = pairwise_sum(&values) / samples as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if samples > 1 { pairwise_sum(&dev) / (samples - 1) as f64 } else { 0.0 };
    Ok(McEstimate {
        mean,
        stderr: (var / samples as f64).sqrt(),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        samples,
    })
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for slot in 0..m {
            let mut q = p.clone();
            q.insert(slot, m - 1);
            out.push(q);
        }
    }
    out
}

/// Permutation operator of `m` legs, partially transposed on the legs in `transposed`.
fn permutation_operator(d: usize, perm: &[usize], transposed: &[bool]) -> RMat {
    let m = perm.len();
    let dim = d.pow(m as u32);
    let map = leg_permutation_map(d, perm);
    let mut out = RMat::zeros(dim, dim);
    for (x, &y) in map.iter().enumerate() {
        let (mut r, mut c) = (digits(y, d, m), digits(x, d, m));
        for j in 0..m {
            if transposed[j] {
                std::mem::swap(&mut r[j], &mut c[j]);
            }
        }
        out[(from_digits(&r, d), from_digits(&c, d))] = 1.0;
    }
    out
}

/// Haar-averaged performance operator `Ω = E_U[w(U) w(U)^†] / d²` on the
/// standard leg order, computed exactly by projecting onto the commutant of
/// the input-side action with (partially transposed) permutation operators.
pub fn performance_operator(task: Task, d: usize, n: usize) -> Result<ChoiMatrix> {
    let m = n + 1;
    let dim_side = d.pow(m as u32);
    guard(dim_side * dim_side)?;
    if m > 6 {
        return Err(CombError::TooLarge("too many legs for the permutation basis".into()));
    }
    let (_, rk) = task_legs(task, n);
    // w(U) = (1 ⊗ W(U)) w(1), where W acts as the conjugate of the input-side
    // diagram's leg action. The commutant of W is spanned by permutations
    // partially transposed on the legs where W acts as U itself.
    let transposed: Vec<bool> = rk.iter().map(|&k| k == LegKind::ConjDefining).collect();
    let ops: Vec<RMat> = permutations(m).iter().map(|p| permutation_operator(d, p, &transposed)).collect();
    let gram = RMat::from_fn(ops.len(), ops.len(), |a, b| ops[a].dot(&ops[b]));
    let ginv = sym_pinv(&gram, 1e-10);

    let id = CMat::identity(d, d);
    let w1 = link_vector(&id, &target_unitary(task, &id), n);
    let wm = CMat::from_fn(dim_side, dim_side, |l, r| w1[l * dim_side + r]);
    let d2 = Complex64::new((d * d) as f64, 0.0);
    let ms: Vec<CMat> = ops.iter().map(|b| &wm * b.map(|v| Complex64::new(v, 0.0)) * wm.adjoint() / d2).collect();

    let mut omega = CMat::zeros(dim_side * dim_side, dim_side * dim_side);
    for (t, bt) in ops.iter().enumerate() {
        let mut coef = CMat::zeros(dim_side, dim_side);
        for (s, ms_s) in ms.iter().enumerate() {
            let g = ginv[(t, s)];
            if g != 0.0 {
                coef += ms_s * Complex64::new(g, 0.0);
            }
        }
        omega += coef.kronecker(&bt.map(|v| Complex64::new(v, 0.0)));
    }
    ChoiMatrix::new(d, standard_legs(n), omega)
}

/// `Tr(C Ω)`, the exact Haar-averaged fidelity of an arbitrary Choi matrix.
pub fn full_space_fidelity(c: &ChoiMatrix, omega: &ChoiMatrix) -> Result<f64> {
    let c = c.permuted(&omega.legs)?;
    Ok(c.data.iter().zip(omega.data.transpose().iter()).map(|(a, b)| a * b).sum::<Complex64>().re)
}

/// `w(1)^† C w(1) / d²`; equals `Tr(C Ω)` whenever `C` has the task symmetry.
pub fn identity_point_fidelity(c: &ChoiMatrix, task: Task, n: usize) -> Result<f64> {
    pointwise_fidelity(c, task, n, &CMat::identity(c.d, c.d))
}

/// Choi matrix of a comb built from Haar-random stage isometries with the
/// given memory dimension. Stage `k` maps memory ⊗ (input leg `k−1`) to
/// memory ⊗ (output leg `k`); the final memory is traced out.
pub fn random_comb_choi<R: Rng + ?Sized>(d: usize, n: usize, memory: usize, rng: &mut R) -> Result<ChoiMatrix> {
    guard(d.pow(2 * (n as u32 + 1)))?;
    let memory = memory.max(1);
    // state[(l, r)][a] as a (d^k · d^k) × mem matrix, rows ordered l-major.
    let mut state = CMat::from_element(1, 1, C1);
    let mut side = 1usize;
    let mut mem = 1usize;
    for _ in 0..=n {
        let w = haar_isometry(memory * d, mem * d, rng);
        let new_side = side * d;
        let mut next = CMat::zeros(new_side * new_side, memory);
        for l in 0..side {
            for r in 0..side {
                let row = l * side + r;
                for x in 0..d {
                    for y in 0..d {
                        let dst = (l * d + x) * new_side + (r * d + y);
                        for a2 in 0..memory {
                            let mut acc = C0;
                            for a in 0..mem {
                                acc += w[(a2 * d + x, a * d + y)] * state[(row, a)];
                            }
                            next[(dst, a2)] += acc;
                        }
                    }
                }
            }
        }
        state = next;
        side = new_side;
        mem = memory;
    }
    let data = &state * state.adjoint();
    ChoiMatrix::new(d, standard_legs(n), data)
}

/// Symmetric feasible blocks obtained by projecting a random comb.
pub fn random_feasible_blocks<R: Rng + ?Sized>(model: &CombModel, memory: usize, rng: &mut R) -> Result<CoefficientBlocks> {
    let c = random_comb_choi(model.d, model.n, memory, rng)?;
    project_to_blocks(model, &c)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub chain: Vec<LegKind>,
    pub d: usize,
    /// `max |U_T^T U_T' − δ_{TT'} 1|`, which is equivalent to the product rule.
    pub product_rule: f64,
    /// Product rule evaluated on materialized units for the top level.
    pub product_rule_dense: f64,
    pub adjoint: f64,
    pub trace: f64,
    pub completeness: f64,
    pub commutation: f64,
    pub tensor_identity: f64,
    pub partial_trace: f64,
}

impl AlgebraReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.product_rule,
            self.product_rule_dense,
            self.adjoint,
            self.trace,
            self.completeness,
            self.commutation,
            self.tensor_identity,
            self.partial_trace,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn max_abs_r(m: &RMat) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Tr over the last tensor leg of a real operator on `k` legs.
fn trace_last(m: &RMat, d: usize) -> RMat {
    let n = m.nrows() / d;
    RMat::from_fn(n, n, |r, c| (0..d).map(|j| m[(r * d + j, c * d + j)]).sum())
}

/// Brute-force check of the matrix-unit identities (product rule, adjoint,
/// trace, completeness, group commutation) and of the tensor-with-identity and
/// partial-trace identities between consecutive levels of one chain.
pub fn verify_lemma_partial_trace(spec: &ChainSpec, seed: u64) -> Result<AlgebraReport> {
    let d = spec.d;
    let k_max = spec.legs.len();
    if d.pow(k_max as u32) > 729 {
        return Err(CombError::TooLarge("chain too large for dense algebra checks".into()));
    }
    let diagram = BratteliDiagram::build(spec);
    let mut reg = crate::matrix_units::ModelRegistry::new(d);
    let basis = PathBasis::build(&diagram, &mut reg)?;
    let mut rep = AlgebraReport { chain: spec.legs.clone(), d, ..Default::default() };
    let mut rng = seeded_rng(seed);

    for level in 1..=k_max {
        let dim = d.pow(level as u32);
        let mut all: Vec<&RMat> = Vec::new();
        for v in 0..diagram.levels[level].len() {
            all.extend(basis.isometries_at(level, v).iter().map(|u| u.as_ref()));
        }
        let mut sum_proj = RMat::zeros(dim, dim);
        for (a, ua) in all.iter().enumerate() {
            for (b, ub) in all.iter().enumerate() {
                let g = ua.transpose() * *ub;
                let resid = if a == b { max_abs_r(&(g - RMat::identity(ua.ncols(), ua.ncols()))) } else { max_abs_r(&g) };
                rep.product_rule = rep.product_rule.max(resid);
            }
            sum_proj += *ua * ua.transpose();
        }
        rep.completeness = rep.completeness.max(max_abs_r(&(sum_proj - RMat::identity(dim, dim))));

        // Adjoint, trace and commutation with a random group element.
        let u = haar_unitary(d, &mut rng);
        let mut g = CMat::identity(1, 1);
        for &leg in &spec.legs[..level] {
            g = g.kronecker(&leg_action(&u, leg));
        }
        for v in 0..diagram.levels[level].len() {
            let us = basis.isometries_at(level, v);
            let dl = weyl_dim(diagram.label(level, v)) as f64;
            for (p, up) in us.iter().enumerate() {
                for (q, uq) in us.iter().enumerate() {
                    let e = &**up * uq.transpose();
                    let e_qp = &**uq * up.transpose();
                    rep.adjoint = rep.adjoint.max(max_abs_r(&(e.transpose() - e_qp)));
                    let expect = if p == q { dl } else { 0.0 };
                    rep.trace = rep.trace.max((e.trace() - expect).abs());
                    if p == 0 || q == 0 {
                        let ec = e.map(|x| Complex64::new(x, 0.0));
                        rep.commutation = rep.commutation.max(crate::linalg::frob_c(&(&ec * &g - &g * &ec)));
                    }
                }
            }
        }

        if level == k_max && dim <= 81 {
            let units: Vec<(usize, usize, usize, RMat)> = (0..diagram.levels[level].len())
                .flat_map(|v| {
                    let us = basis.isometries_at(level, v);
                    (0..us.len())
                        .flat_map(move |p| (0..us.len()).map(move |q| (v, p, q, &*us[p] * us[q].transpose())))
                        .collect::<Vec<_>>()
                })
                .collect();
            for (v, p, q, e) in &units {
                for (v2, p2, q2, e2) in &units {
                    let prod = e * e2;
                    let expect = if v == v2 && q == p2 {
                        let us = basis.isometries_at(level, *v);
                        &*us[*p] * us[*q2].transpose()
                    } else {
                        RMat::zeros(dim, dim)
                    };
                    rep.product_rule_dense = rep.product_rule_dense.max(max_abs_r(&(prod - expect)));
                }
            }
        }

        // Identities linking level-1 and level.
        let lower = level - 1;
        for mu in 0..diagram.levels[lower].len() {
            let paths_mu = diagram.paths_at(lower, mu);
            for r in paths_mu {
                for s in paths_mu {
                    let e = &*basis.isometry(r) * basis.isometry(s).transpose();
                    let lhs = e.kronecker(&RMat::identity(d, d));
                    let mut rhs = RMat::zeros(lhs.nrows(), lhs.ncols());
                    for lam in diagram.children(lower, mu) {
                        rhs += &*basis.isometry(&r.extend(lam)) * basis.isometry(&s.extend(lam)).transpose();
                    }
                    rep.tensor_identity = rep.tensor_identity.max(max_abs_r(&(lhs - rhs)));
                }
            }
        }
        for lam in 0..diagram.levels[level].len() {
            let dl = weyl_dim(diagram.label(level, lam)) as f64;
            let paths = diagram.paths_at(level, lam);
            for p in paths {
                for q in paths {
                    let e = &*basis.isometry(p) * basis.isometry(q).transpose();
                    let lhs = trace_last(&e, d);
                    let (pp, qp) = (p.parent().unwrap(), q.parent().unwrap());
                    let expect = if pp.end() == qp.end() {
                        let dm = weyl_dim(diagram.label(lower, pp.end())) as f64;
                        &*basis.isometry(&pp) * basis.isometry(&qp).transpose() * (dl / dm)
                    } else {
                        RMat::zeros(lhs.nrows(), lhs.ncols())
                    };
                    rep.partial_trace = rep.partial_trace.max(max_abs_r(&(lhs - expect)));
                }
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_round_trip() {
        let mut rng = seeded_rng(3);
        let c = random_comb_choi(2, 1, 2, &mut rng).unwrap();
        let order = vec![Leg::O(1), Leg::F, Leg::I(1), Leg::P];
        let back = c.permuted(&order).unwrap().permuted(&c.legs).unwrap();
        assert!(crate::linalg::frob_c(&(back.data - &c.data)) < 1e-12);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = seeded_rng(5);
        let a = crate::haar::ginibre(2, 2, &mut rng);
        let b = crate::haar::ginibre(2, 2, &mut rng);
        let c = ChoiMatrix::new(2, vec![Leg::F, Leg::P], a.kronecker(&b)).unwrap();
        let tp = c.partial_trace(&[Leg::P]).unwrap();
        assert!(crate::linalg::frob_c(&(tp.data - &a * b.trace())) < 1e-12);
        let tf = c.partial_trace(&[Leg::F]).unwrap();
        assert_eq!(tf.legs, vec![Leg::P]);
        assert!(crate::linalg::frob_c(&(tf.data - &b * a.trace())) < 1e-12);
    }

    #[test]
    fn random_combs_satisfy_conditions() {
        let mut rng = seeded_rng(9);
        for (d, n) in [(2, 1), (2, 2), (3, 1)] {
            let c = random_comb_choi(d, n, 3, &mut rng).unwrap();
            let rep = check_comb_conditions(&c, n).unwrap();
            assert!(rep.max_residual() < 1e-10, "{rep:?}");
            assert!((c.trace().re - (d as f64).powi(n as i32 + 1)).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbation_breaks_marginals() {
        let mut rng = seeded_rng(10);
        let c = random_comb_choi(2, 1, 2, &mut rng).unwrap();
        let mut bad = c.clone();
        bad.data[(0, 0)] += Complex64::new(1e-3, 0.0);
        bad.data[(1, 1)] -= Complex64::new(1e-3, 0.0);
        let r = check_comb_conditions(&bad, 1).unwrap();
        assert!(r.marginal_residual > 5e-4);
    }

    #[test]
    fn permutation_operators_commute_with_action() {
        let mut rng = seeded_rng(4);
        let u = haar_unitary(2, &mut rng);
        let op = permutation_operator(2, &[1, 2, 0], &[true, false, false]).map(|v| Complex64::new(v, 0.0));
        let w = u.kronecker(&u.conjugate()).kronecker(&u.conjugate());
        assert!(crate::linalg::frob_c(&(&op * &w - &w * &op)) < 1e-12);
    }
}
