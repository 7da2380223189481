//! Parametrized combs with a one-dimensional multiplicity memory.
//!
//! Every memory sector `(σ_k, ρ_k)` carries a single amplitude per path pair,
//! so each stage reduces to small isometries
//! `V_k^{ρ_k σ_{k−1}} : C^{parents(ρ_k)} → C^{children(σ_{k−1})}`.
//! The amplitudes obey
//!
//! `a^k_{(T→σ_k, R→ρ_k)} = sqrt(d_{ρ_k}/d_{ρ_{k−1}}) · V[σ_k, ρ_{k−1}] · a^{k−1}_{(T,R)}`
//!
//! with `a^0 = 1`, and the induced top blocks are `c = a a†`. The fidelity is
//! a sum of squared moduli of linear forms in the top amplitudes, so its
//! gradient follows from one forward and one backward sweep.
//!
//! Blocks whose input side is larger than their output side cannot be
//! isometries. Such blocks lose input directions: the corresponding memory
//! sectors are removed, which shrinks the outputs of earlier blocks and may
//! cascade. Every distinct way of choosing the pruned parents gives one
//! variant; [`optimize`] tries all of them and the choice made is recorded
//! in [`ParamShape::pruned`].

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comb_sdp::{CoefficientBlocks, CombModel, ObjectiveCoeffs};
use crate::error::{CombError, Result};
use crate::haar::{haar_isometry, seeded_rng};
use crate::linalg::CMat;
use crate::rep_theory::{chain_for_task, weyl_dim, Task};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Induced blocks must satisfy the comb conditions to this accuracy.
pub const CONTRACT_TOLERANCE: f64 = 1e-8;

/// Effective shape of one isometry block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StiefelShape {
    pub stage: usize,
    /// `ρ_k`, a vertex of the input-side diagram at level `stage`.
    pub right: usize,
    /// `σ_{k−1}`, a vertex of the output-side diagram at level `stage − 1`.
    pub left: usize,
    /// Surviving parents `ρ_{k−1}` (columns).
    pub inputs: Vec<usize>,
    /// Surviving children `σ_k` (rows).
    pub outputs: Vec<usize>,
    pub raw_in: usize,
    pub raw_out: usize,
}

impl StiefelShape {
    pub fn in_dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn out_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_active(&self) -> bool {
        !self.inputs.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrunedSector {
    pub level: usize,
    pub left: usize,
    pub right: usize,
    /// Stage whose block forced the removal.
    pub forced_by_stage: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamShape {
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub blocks: Vec<StiefelShape>,
    /// `live[k][block_id]` for the level-`k` layout.
    pub live: Vec<Vec<bool>>,
    pub pruned: Vec<PrunedSector>,
}

impl ParamShape {
    pub fn active(&self) -> impl Iterator<Item = &StiefelShape> {
        self.blocks.iter().filter(|b| b.is_active())
    }

    /// Real dimension of the product of Stiefel manifolds being optimized.
    pub fn manifold_dim(&self) -> usize {
        self.active().map(|b| 2 * b.in_dim() * b.out_dim() - b.in_dim() * b.in_dim()).sum()
    }
}

/// Subsets of size `k` of `0..n`, ordered so that the first one is the tail
/// `n−k..n` and later ones move towards the front.
fn tail_first_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out.reverse();
    out
}

/// Shape under the given prune choices. Returns the shape and the number of
/// options available at every decision that was taken.
fn compute_shape(model: &CombModel, choices: &[usize]) -> Result<(ParamShape, Vec<usize>)> {
    let sys = &model.system;
    let (bl, br) = (&sys.bl, &sys.br);
    let depth = sys.depth();
    let mut live: Vec<Vec<bool>> = sys.levels.iter().map(|l| vec![true; l.blocks.len()]).collect();
    let mut pruned = Vec::new();
    let mut options = Vec::new();

    let reach = |live: &Vec<Vec<bool>>| -> Vec<Vec<bool>> {
        let mut r: Vec<Vec<bool>> = sys.levels.iter().map(|l| vec![false; l.blocks.len()]).collect();
        r[0][0] = live[0][0];
        for k in 1..=depth {
            let (lo, hi) = (&sys.levels[k - 1], &sys.levels[k]);
            for (b, blk) in hi.blocks.iter().enumerate() {
                if !live[k][b] {
                    continue;
                }
                r[k][b] = bl.parents(k, blk.left).iter().any(|&s| {
                    br.parents(k, blk.right).iter().any(|&q| r[k - 1][lo.block_id(s, q)])
                });
            }
        }
        r
    };

    loop {
        let usable = reach(&live);
        let mut changed = false;
        for k in (1..=depth).rev() {
            let (lo, hi) = (&sys.levels[k - 1], &sys.levels[k]);
            for rho2 in 0..br.levels[k].len() {
                for sigma in 0..bl.levels[k - 1].len() {
                    let ins: Vec<usize> = br
                        .parents(k, rho2)
                        .into_iter()
                        .filter(|&q| usable[k - 1][lo.block_id(sigma, q)])
                        .collect();
                    let outs = bl.children(k - 1, sigma).into_iter().filter(|&s| live[k][hi.block_id(s, rho2)]).count();
                    if ins.len() > outs {
                        let subsets = tail_first_subsets(ins.len(), ins.len() - outs);
                        let pick = choices.get(options.len()).copied().unwrap_or(0).min(subsets.len() - 1);
                        options.push(subsets.len());
                        for q in subsets[pick].iter().map(|&i| ins[i]) {
                            let id = lo.block_id(sigma, q);
                            if live[k - 1][id] {
                                live[k - 1][id] = false;
                                pruned.push(PrunedSector { level: k - 1, left: sigma, right: q, forced_by_stage: k });
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
        if !live[0][0] {
            return Err(CombError::Internal("pruning removed the initial memory sector".into()));
        }
        if !changed {
            live = usable;
            break;
        }
    }

    let mut blocks = Vec::new();
    for k in 1..=depth {
        let (lo, hi) = (&sys.levels[k - 1], &sys.levels[k]);
        for rho2 in 0..br.levels[k].len() {
            for sigma in 0..bl.levels[k - 1].len() {
                let parents = br.parents(k, rho2);
                let children = bl.children(k - 1, sigma);
                let inputs = parents.iter().copied().filter(|&q| live[k - 1][lo.block_id(sigma, q)]).collect();
                let outputs = children.iter().copied().filter(|&s| live[k][hi.block_id(s, rho2)]).collect();
                blocks.push(StiefelShape {
                    stage: k,
                    right: rho2,
                    left: sigma,
                    inputs,
                    outputs,
                    raw_in: parents.len(),
                    raw_out: children.len(),
                });
            }
        }
    }
    Ok((ParamShape { task: model.task, d: model.d, n: model.n, blocks, live, pruned }, options))
}

/// Upper limit on the number of prune variants explored.
pub const MAX_VARIANTS: usize = 64;

/// All distinct shapes reachable by varying the prune choices, default first.
fn shape_variants(model: &CombModel) -> Result<Vec<ParamShape>> {
    fn explore(
        model: &CombModel,
        prefix: &mut Vec<usize>,
        out: &mut Vec<ParamShape>,
    ) -> Result<()> {
        if out.len() >= MAX_VARIANTS {
            return Ok(());
        }
        let Ok((shape, options)) = compute_shape(model, prefix) else {
            return Ok(());
        };
        if options.len() <= prefix.len() {
            if !out.iter().any(|s| s.live == shape.live) {
                out.push(shape);
            }
            return Ok(());
        }
        for c in 0..options[prefix.len()] {
            prefix.push(c);
            explore(model, prefix, out)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut out = Vec::new();
    explore(model, &mut Vec::new(), &mut out)?;
    if out.is_empty() {
        return Err(CombError::Infeasible("every prune variant removes the initial memory sector".into()));
    }
    Ok(out)
}

/// The first viable shape, preferring to prune the last parents in diagram order.
pub fn param_shape(task: Task, d: usize, n: usize) -> Result<ParamShape> {
    Ok(shape_variants(&CombModel::new(task, d, n)?)?.swap_remove(0))
}

/// How scalar variables are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountConvention {
    /// `2 · min(in, out) · out` per block of the unpruned diagram shapes.
    Calibrated,
    /// `2 · in · out` per block of the unpruned diagram shapes.
    RawEntries,
    /// Real dimension `2 · in · out − in²` of the pruned Stiefel blocks.
    Stiefel,
}

pub fn count_parameters_with(shape: &ParamShape, convention: CountConvention) -> u64 {
    let raw = || shape.blocks.iter().map(|b| (b.raw_in as u64, b.raw_out as u64));
    match convention {
        CountConvention::Calibrated => raw().map(|(i, o)| 2 * i.min(o) * o).sum(),
        CountConvention::RawEntries => raw().map(|(i, o)| 2 * i * o).sum(),
        CountConvention::Stiefel => shape.manifold_dim() as u64,
    }
}

/// [`CountConvention::Calibrated`] count. It depends only on the unpruned
/// diagram shapes, so it is computed from the Bratteli diagrams alone.
pub fn count_parameters(task: Task, d: usize, n: usize) -> Result<u64> {
    let (bl, br) = chain_for_task(task, d, n)?;
    let mut total = 0u64;
    for k in 1..=n + 1 {
        for rho2 in 0..br.levels[k].len() {
            let raw_in = br.parents(k, rho2).len() as u64;
            for sigma in 0..bl.levels[k - 1].len() {
                let raw_out = bl.children(k - 1, sigma).len() as u64;
                total += 2 * raw_in.min(raw_out) * raw_out;
            }
        }
    }
    Ok(total)
}

/// Complex entries of unreduced stage isometries `A_{k−1} ⊗ C^d → A_k ⊗ C^d`,
/// where `A_k = (Σ_σ d_σ)(Σ_ρ d_ρ)` is the memory needed to reproduce the
/// symmetric circuit with one-dimensional multiplicity memory.
pub fn count_parameters_naive(task: Task, d: usize, n: usize) -> Result<u128> {
    let (bl, br) = chain_for_task(task, d, n)?;
    let mem: Vec<u128> = (0..=n + 1)
        .map(|k| {
            let sl: u128 = bl.levels[k].iter().map(|l| weyl_dim(l) as u128).sum();
            let sr: u128 = br.levels[k].iter().map(|l| weyl_dim(l) as u128).sum();
            sl * sr
        })
        .collect();
    let d = d as u128;
    Ok((1..=n + 1).map(|k| mem[k - 1] * d * mem[k] * d).sum())
}

/// One multiplication step `a^k[dst] += factor · V[row, col] · a^{k−1}[src]`.
#[derive(Clone, Copy, Debug)]
struct Transition {
    src_block: usize,
    src: usize,
    dst_block: usize,
    dst: usize,
    param: usize,
    row: usize,
    col: usize,
    factor: f64,
}

/// Rank-one parametrization of a `(task, d, n)` cell.
#[derive(Clone, Debug)]
pub struct ParamModel {
    pub model: CombModel,
    pub shape: ParamShape,
    pub objective: ObjectiveCoeffs,
    /// Indices into `shape.blocks` of the optimized blocks.
    active: Vec<usize>,
    transitions: Vec<Vec<Transition>>,
}

/// A point on the product of Stiefel manifolds, one matrix per active block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamComb {
    pub task: Task,
    pub d: usize,
    pub n: usize,
    #[serde(skip)]
    pub blocks: Vec<CMat>,
}

impl ParamModel {
    /// The model with the first viable prune variant.
    pub fn new(task: Task, d: usize, n: usize) -> Result<Self> {
        let model = CombModel::new(task, d, n)?;
        let shape = shape_variants(&model)?.swap_remove(0);
        Ok(Self::with_shape(model, shape))
    }

    /// One model per distinct prune variant, the default first.
    pub fn variants(task: Task, d: usize, n: usize) -> Result<Vec<Self>> {
        let model = CombModel::new(task, d, n)?;
        Ok(shape_variants(&model)?.into_iter().map(|s| Self::with_shape(model.clone(), s)).collect())
    }

    fn with_shape(model: CombModel, shape: ParamShape) -> Self {
        let objective = model.objective_coefficients();
        let active: Vec<usize> = (0..shape.blocks.len()).filter(|&i| shape.blocks[i].is_active()).collect();
        let sys = &model.system;
        let (bl, br) = (&sys.bl, &sys.br);
        let mut transitions = Vec::with_capacity(sys.depth());
        for k in 1..=sys.depth() {
            let (lo, hi) = (&sys.levels[k - 1], &sys.levels[k]);
            let mut list = Vec::new();
            for (p, &bi) in active.iter().enumerate() {
                let blk = &shape.blocks[bi];
                if blk.stage != k {
                    continue;
                }
                let d_rho2 = weyl_dim(br.label(k, blk.right)) as f64;
                for (col, &rho) in blk.inputs.iter().enumerate() {
                    let factor = (d_rho2 / weyl_dim(br.label(k - 1, rho)) as f64).sqrt();
                    let src_block = lo.block_id(blk.left, rho);
                    let lo_blk = &lo.blocks[src_block];
                    for (row, &s2) in blk.outputs.iter().enumerate() {
                        let dst_block = hi.block_id(s2, blk.right);
                        let hi_blk = &hi.blocks[dst_block];
                        for (t, tp) in bl.paths_at(k - 1, blk.left).iter().enumerate() {
                            let t2 = bl.path_position(&tp.extend(s2));
                            for (q, qp) in br.paths_at(k - 1, rho).iter().enumerate() {
                                let q2 = br.path_position(&qp.extend(blk.right));
                                list.push(Transition {
                                    src_block,
                                    src: lo_blk.index(t, q),
                                    dst_block,
                                    dst: hi_blk.index(t2, q2),
                                    param: p,
                                    row,
                                    col,
                                    factor,
                                });
                            }
                        }
                    }
                }
            }
            transitions.push(list);
        }
        Self { model, shape, objective, active, transitions }
    }

    pub fn active_shapes(&self) -> impl Iterator<Item = &StiefelShape> {
        self.active.iter().map(|&i| &self.shape.blocks[i])
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamComb {
        let blocks = self.active_shapes().map(|b| haar_isometry(b.out_dim(), b.in_dim(), rng)).collect();
        ParamComb { task: self.model.task, d: self.model.d, n: self.model.n, blocks }
    }

    fn check_point(&self, p: &ParamComb) -> Result<()> {
        if p.blocks.len() != self.active.len() {
            return Err(CombError::DimensionMismatch("wrong number of parameter blocks".into()));
        }
        for (m, s) in p.blocks.iter().zip(self.active_shapes()) {
            if m.nrows() != s.out_dim() || m.ncols() != s.in_dim() {
                return Err(CombError::DimensionMismatch(format!(
                    "block at stage {} is {}×{}, expected {}×{}",
                    s.stage,
                    m.nrows(),
                    m.ncols(),
                    s.out_dim(),
                    s.in_dim()
                )));
            }
        }
        Ok(())
    }

    fn zero_levels(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.model.system.levels.iter().map(|l| l.blocks.iter().map(|b| vec![C0; b.size()]).collect()).collect()
    }

    fn forward(&self, v: &[CMat]) -> Vec<Vec<Vec<Complex64>>> {
        let mut a = self.zero_levels();
        a[0][0][0] = Complex64::new(1.0, 0.0);
        for (k, list) in self.transitions.iter().enumerate() {
            let (head, tail) = a.split_at_mut(k + 1);
            let (prev, next) = (&head[k], &mut tail[0]);
            for t in list {
                next[t.dst_block][t.dst] += v[t.param][(t.row, t.col)] * prev[t.src_block][t.src] * t.factor;
            }
        }
        a
    }

    /// `z_b = κ_b · a_b` and the scale `s_b` for every weighted top block.
    fn linear_forms(&self, top: &[Vec<Complex64>]) -> Vec<Option<(Complex64, f64)>> {
        self.objective
            .weights
            .iter()
            .zip(top)
            .map(|(w, a)| {
                w.as_ref().map(|(kappa, s)| (kappa.iter().zip(a).map(|(k, x)| x * *k).sum::<Complex64>(), *s))
            })
            .collect()
    }

    /// Amplitude vectors of the top level, one per top block.
    pub fn amplitudes(&self, p: &ParamComb) -> Result<Vec<DVector<Complex64>>> {
        self.check_point(p)?;
        let a = self.forward(&p.blocks);
        Ok(a.last().unwrap().iter().map(|v| DVector::from_column_slice(v)).collect())
    }

    /// Blocks `c = a a†`, checked against the comb conditions.
    pub fn induced_blocks(&self, p: &ParamComb) -> Result<CoefficientBlocks> {
        let blocks = CoefficientBlocks {
            blocks: self.amplitudes(p)?.iter().map(|a| a * a.adjoint()).collect(),
        };
        let residual = self.model.comb_residual(&blocks);
        if residual > CONTRACT_TOLERANCE {
            return Err(CombError::Infeasible(format!("induced blocks violate the comb conditions by {residual:.2e}")));
        }
        Ok(blocks)
    }

    pub fn fidelity(&self, p: &ParamComb) -> Result<f64> {
        self.check_point(p)?;
        Ok(self.fidelity_unchecked(&p.blocks))
    }

    fn fidelity_unchecked(&self, v: &[CMat]) -> f64 {
        let a = self.forward(v);
        self.linear_forms(a.last().unwrap()).iter().flatten().map(|(z, s)| s * z.norm_sqr()).sum()
    }

    /// Fidelity and Euclidean gradient `G` with `dF = Re Σ tr(G† dV)`.
    pub fn fidelity_and_gradient(&self, p: &ParamComb) -> Result<(f64, Vec<CMat>)> {
        self.check_point(p)?;
        Ok(self.value_and_gradient(&p.blocks))
    }

    fn value_and_gradient(&self, v: &[CMat]) -> (f64, Vec<CMat>) {
        let a = self.forward(v);
        let depth = a.len() - 1;
        let forms = self.linear_forms(&a[depth]);
        let value = forms.iter().flatten().map(|(z, s)| s * z.norm_sqr()).sum();
        let mut beta = self.zero_levels();
        for (b, form) in forms.iter().enumerate() {
            if let (Some((z, s)), Some((kappa, _))) = (form, &self.objective.weights[b]) {
                for (x, k) in beta[depth][b].iter_mut().zip(kappa) {
                    *x = z.conj() * (s * k);
                }
            }
        }
        let mut grad: Vec<CMat> = v.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect();
        for k in (1..=depth).rev() {
            let (head, tail) = beta.split_at_mut(k);
            let (prev, next) = (&mut head[k - 1], &tail[0]);
            for t in &self.transitions[k - 1] {
                let b = next[t.dst_block][t.dst];
                if b == C0 {
                    continue;
                }
                grad[t.param][(t.row, t.col)] += a[k - 1][t.src_block][t.src] * b * t.factor;
                prev[t.src_block][t.src] += v[t.param][(t.row, t.col)] * b * t.factor;
            }
        }
        for g in &mut grad {
            g.iter_mut().for_each(|x| *x = x.conj() * 2.0);
        }
        (value, grad)
    }
}

fn inner(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p.conj() * q).re).sum::<f64>()).sum()
}

/// `G − V herm(V† G)`.
fn project_tangent(v: &[CMat], g: &[CMat]) -> Vec<CMat> {
    v.iter()
        .zip(g)
        .map(|(x, gx)| {
            let h = x.adjoint() * gx;
            let herm = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
            gx - x * herm
        })
        .collect()
}

/// Q factor of a thin QR with the diagonal of R made positive.
fn qr_retract(m: &CMat) -> CMat {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m.ncols() {
        let rjj = r[(j, j)];
        if rjj.norm() > 0.0 {
            let phase = rjj / rjj.norm();
            q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
        }
    }
    q
}

fn retract(v: &[CMat], dir: &[CMat], t: f64) -> Vec<CMat> {
    v.iter().zip(dir).map(|(x, d)| qr_retract(&(x + d * Complex64::new(t, 0.0)))).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { restarts: 32, seed: 0, tol: 1e-9, max_iter: 5000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub restart: usize,
    pub fidelity: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: ParamComb,
    pub fidelity: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Fidelity after every iteration of the best restart.
    pub trace: Vec<f64>,
    pub restarts: Vec<RestartOutcome>,
}

fn restart_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ParamModel {
    /// Riemannian ascent from one starting point.
    pub fn ascend(&self, start: ParamComb, tol: f64, max_iter: usize) -> (ParamComb, f64, f64, bool, Vec<f64>) {
        let mut v = start.blocks;
        let (mut f, g) = self.value_and_gradient(&v);
        let mut xi = project_tangent(&v, &g);
        let mut gnorm = inner(&xi, &xi).sqrt();
        let mut step = 1.0;
        let mut trace = vec![f];
        let mut converged = gnorm <= tol;
        let mut it = 0;
        while !converged && it < max_iter {
            it += 1;
            let g2 = gnorm * gnorm;
            let mut t = step;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = retract(&v, &xi, t);
                let fc = self.fidelity_unchecked(&cand);
                if fc >= f + 1e-4 * t * g2 {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                break;
            };
            let (_, gc) = self.value_and_gradient(&cand);
            let xic = project_tangent(&cand, &gc);
            let s: Vec<CMat> = cand.iter().zip(&v).map(|(a, b)| a - b).collect();
            let y: Vec<CMat> = xic.iter().zip(&xi).map(|(a, b)| a - b).collect();
            let sy = inner(&s, &y).abs();
            step = if sy > 1e-300 { (inner(&s, &s) / sy).clamp(1e-6, 1e3) } else { 1.0 };
            v = cand;
            f = fc;
            xi = xic;
            gnorm = inner(&xi, &xi).sqrt();
            trace.push(f);
            converged = gnorm <= tol;
        }
        let p = ParamComb { task: self.model.task, d: self.model.d, n: self.model.n, blocks: v };
        (p, f, gnorm, converged, trace)
    }

    pub fn optimize(&self, opts: &OptimizeOptions) -> OptimizeResult {
        let runs: Vec<_> = (0..opts.restarts.max(1))
            .into_par_iter()
            .map(|i| {
                let mut rng = seeded_rng(restart_seed(opts.seed, i));
                let start = self.random_point(&mut rng);
                (i, self.ascend(start, opts.tol, opts.max_iter))
            })
            .collect();
        let restarts = runs
            .iter()
            .map(|(i, (_, f, g, c, tr))| RestartOutcome {
                restart: *i,
                fidelity: *f,
                gradient_norm: *g,
                iterations: tr.len() - 1,
                converged: *c,
            })
            .collect();
        let (_, (best, fidelity, gradient_norm, converged, trace)) = runs
            .into_iter()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .expect("at least one restart");
        OptimizeResult { best, fidelity, gradient_norm, converged, trace, restarts }
    }
}

/// Outcome of optimizing every prune variant of a cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellOptimum {
    /// Index into [`ParamModel::variants`] of the winning variant.
    pub variant: usize,
    pub variant_count: usize,
    pub variant_fidelities: Vec<f64>,
    pub shape: ParamShape,
    pub result: OptimizeResult,
}

/// Optimizes every prune variant with the same options and keeps the best.
pub fn optimize(task: Task, d: usize, n: usize, opts: &OptimizeOptions) -> Result<CellOptimum> {
    let variants = ParamModel::variants(task, d, n)?;
    let results: Vec<OptimizeResult> = variants.iter().map(|m| m.optimize(opts)).collect();
    let variant_fidelities: Vec<f64> = results.iter().map(|r| r.fidelity).collect();
    let (variant, result) = results
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1.fidelity > best.1.fidelity { cur } else { best })
        .expect("at least one variant");
    Ok(CellOptimum {
        variant,
        variant_count: variants.len(),
        variant_fidelities,
        shape: variants[variant].shape.clone(),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_stage_shape_for_transpose() {
        let s = param_shape(Task::Transpose, 2, 1).unwrap();
        let first = &s.blocks[0];
        assert_eq!((first.stage, first.raw_in, first.raw_out), (1, 1, 1));
        assert!(s.pruned.is_empty());
    }

    #[test]
    fn pruning_happens_for_two_queries_at_d2() {
        let s = param_shape(Task::Transpose, 2, 2).unwrap();
        assert!(!s.pruned.is_empty());
        assert!(s.active().all(|b| b.in_dim() <= b.out_dim()));
    }

    #[test]
    fn random_points_induce_combs() {
        let mut rng = seeded_rng(3);
        for (task, d, n) in [(Task::Transpose, 2, 2), (Task::Invert, 3, 2), (Task::Transpose, 2, 3)] {
            let pm = ParamModel::new(task, d, n).unwrap();
            for _ in 0..3 {
                let p = pm.random_point(&mut rng);
                let blocks = pm.induced_blocks(&p).unwrap();
                assert!(pm.model.comb_residual(&blocks) < 1e-10);
                let f = pm.fidelity(&p).unwrap();
                assert!((-1e-9..=1.0 + 1e-9).contains(&f));
                assert!((f - pm.model.fidelity(&blocks)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phases_do_not_matter_for_one_query() {
        let pm = ParamModel::new(Task::Invert, 2, 1).unwrap();
        let mut rng = seeded_rng(9);
        let p = pm.random_point(&mut rng);
        let mut q = p.clone();
        q.blocks[0] *= Complex64::from_polar(1.0, 0.7);
        assert!((pm.fidelity(&p).unwrap() - pm.fidelity(&q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pm = ParamModel::new(Task::Transpose, 2, 2).unwrap();
        let mut rng = seeded_rng(4);
        let p = pm.random_point(&mut rng);
        let (_, g) = pm.fidelity_and_gradient(&p).unwrap();
        let h = 1e-5;
        for (b, m) in p.blocks.iter().enumerate() {
            for idx in 0..m.len() {
                for unit in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    plus.blocks[b][idx] += unit * h;
                    minus.blocks[b][idx] -= unit * h;
                    let fd = (pm.fidelity(&plus).unwrap() - pm.fidelity(&minus).unwrap()) / (2.0 * h);
                    let an = (g[b][idx].conj() * unit).re;
                    assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn naive_count_examples() {
        assert_eq!(count_parameters_naive(Task::Transpose, 2, 1).unwrap(), 272);
        assert_eq!(count_parameters(Task::Transpose, 2, 1).unwrap(), 10);
        assert_eq!(count_parameters(Task::Transpose, 2, 2).unwrap(), 26);
    }

    #[test]
    fn diagram_count_matches_shape_count() {
        for (task, d, n) in [(Task::Transpose, 2, 3), (Task::Transpose, 3, 2), (Task::Invert, 3, 3), (Task::Invert, 2, 2)] {
            let shape = param_shape(task, d, n).unwrap();
            assert_eq!(count_parameters(task, d, n).unwrap(), count_parameters_with(&shape, CountConvention::Calibrated));
        }
    }
}
