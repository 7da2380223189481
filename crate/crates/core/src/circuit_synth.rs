//! Sequential-circuit realisation of symmetric combs.
//!
//! A comb given by symmetric coefficient blocks is turned into a chain of
//! isometries acting on a memory register of the form
//! `⊕_{(σ,ρ)} C^{r_{σρ}} ⊗ V_σ ⊗ V_ρ`. Each stage absorbs one input leg on
//! the right-hand irrep register, mixes the multiplicity memory with a small
//! isometry and emits one output leg from the left-hand irrep register.
//! Contracting the chain gives a purification `|W⟩⟩` whose reduced operator
//! reproduces the original Choi matrix.
//!
//! The same construction for a single alternating chain (one irrep register
//! shared by inputs and outputs) covers combs that are covariant under one
//! group action, see [`CovariantModel`].

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choi_verify::{
    guard, input_leg, output_leg, random_comb_choi, standard_legs, ChoiMatrix, Leg,
};
use crate::comb_sdp::{CoefficientBlocks, CombModel};
use crate::error::{CombError, Result};
use crate::linalg::{frob_c, herm_eigen, CMat, RMat};
use crate::matrix_units::{ModelRegistry, PathBasis};
use crate::rep_theory::{weyl_dim, BratteliDiagram, ChainSpec, LegKind};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Relative cut below which eigenvalues of a level block count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Largest comb-condition residual accepted by the synthesis routines.
pub const INPUT_TOLERANCE: f64 = 1e-8;

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `cᵀ = F F†` restricted to the support, together with `F diag(1/e)`.
#[derive(Clone, Debug)]
struct MemoryFactor {
    f: CMat,
    right_inverse: CMat,
}

impl MemoryFactor {
    fn rank(&self) -> usize {
        self.f.ncols()
    }
}

fn memory_factors(blocks: &[CMat]) -> Vec<MemoryFactor> {
    let decomps: Vec<_> = blocks.iter().map(|c| herm_eigen(&c.map(|z| z.conj()))).collect();
    let top = decomps.iter().flat_map(|(v, _)| v.iter().copied()).fold(0.0_f64, f64::max);
    let cut = RANK_TOLERANCE * top.max(f64::MIN_POSITIVE);
    decomps
        .into_iter()
        .map(|(vals, vecs)| {
            let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > cut).collect();
            let rows = vecs.nrows();
            let f = CMat::from_fn(rows, keep.len(), |a, m| vecs[(a, keep[m])] * vals[keep[m]].sqrt());
            let right_inverse = CMat::from_fn(rows, keep.len(), |a, m| vecs[(a, keep[m])] / vals[keep[m]].sqrt());
            MemoryFactor { f, right_inverse }
        })
        .collect()
}

/// Memory map `ratio · F_hiᵀ† E F_lo diag(1/e_lo)` for a path-extension map
/// `ext[a_lo] = a_hi`.
fn memory_block(hi: &MemoryFactor, lo: &MemoryFactor, ext: &[usize], ratio: f64) -> CMat {
    let mut e_r = CMat::zeros(hi.f.nrows(), lo.rank());
    for (a, &b) in ext.iter().enumerate() {
        for m in 0..lo.rank() {
            e_r[(b, m)] += lo.right_inverse[(a, m)];
        }
    }
    hi.f.adjoint() * e_r * cr(ratio)
}

/// Attaches one leg through the edge isometry `Γ`:
/// `new[(ra, y, rb), (a, i', b)] = f Σ_i old[(ra, rb), (a, i, b)] Γ[(i, y), i']`.
fn attach_leg(old: &CMat, rb: usize, a_dim: usize, b_dim: usize, gamma: &RMat, d: usize, factor: f64) -> CMat {
    let din = gamma.nrows() / d;
    let dout = gamma.ncols();
    let ra = old.nrows() / rb;
    let mut new = CMat::zeros(ra * d * rb, a_dim * dout * b_dim);
    for xa in 0..ra {
        for xb in 0..rb {
            let row = xa * rb + xb;
            for ia in 0..a_dim {
                for i in 0..din {
                    for ib in 0..b_dim {
                        let v = old[(row, (ia * din + i) * b_dim + ib)];
                        if v == C0 {
                            continue;
                        }
                        let v = v * factor;
                        for y in 0..d {
                            let nrow = (xa * d + y) * rb + xb;
                            for i2 in 0..dout {
                                let g = gamma[(i * d + y, i2)];
                                if g != 0.0 {
                                    new[(nrow, (ia * dout + i2) * b_dim + ib)] += v * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    new
}

/// `new[row, (p, m')] = Σ_m v[m', m] old[row, (p, m)]`.
fn apply_memory(old: &CMat, prefix: usize, v: &CMat) -> CMat {
    let (r_out, r_in) = (v.nrows(), v.ncols());
    let mut new = CMat::zeros(old.nrows(), prefix * r_out);
    for row in 0..old.nrows() {
        for p in 0..prefix {
            for m2 in 0..r_out {
                let mut acc = C0;
                for m in 0..r_in {
                    acc += v[(m2, m)] * old[(row, p * r_in + m)];
                }
                new[(row, p * r_out + m2)] = acc;
            }
        }
    }
    new
}

/// One isometry of a stage, acting on the multiplicity memory.
///
/// Columns are grouped into sectors `(vertex, rank)` of the incoming level and
/// rows into sectors of the outgoing level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageBlock {
    /// Irrep vertices fixing the block. For two-sided combs this is
    /// `(ρ_k, σ_{k−1})`; for a single chain it is `(λ_{2k−1}, 0)`.
    pub sector: (usize, usize),
    pub row_sectors: Vec<(usize, usize)>,
    pub col_sectors: Vec<(usize, usize)>,
    #[serde(skip)]
    pub matrix: CMat,
}

impl StageBlock {
    fn assemble(sector: (usize, usize), rows: Vec<(usize, usize)>, cols: Vec<(usize, usize)>, parts: &[Vec<CMat>]) -> Self {
        let nr = rows.iter().map(|r| r.1).sum();
        let nc = cols.iter().map(|c| c.1).sum();
        let mut matrix = CMat::zeros(nr, nc);
        let mut r0 = 0;
        for (ri, r) in rows.iter().enumerate() {
            let mut c0 = 0;
            for (ci, c) in cols.iter().enumerate() {
                matrix.view_mut((r0, c0), (r.1, c.1)).copy_from(&parts[ri][ci]);
                c0 += c.1;
            }
            r0 += r.1;
        }
        Self { sector, row_sectors: rows, col_sectors: cols, matrix }
    }

    fn part(&self, row_vertex: usize, col_vertex: usize) -> Option<CMat> {
        let r0: usize = self.row_sectors.iter().take_while(|r| r.0 != row_vertex).map(|r| r.1).sum();
        let c0: usize = self.col_sectors.iter().take_while(|c| c.0 != col_vertex).map(|c| c.1).sum();
        let rr = self.row_sectors.iter().find(|r| r.0 == row_vertex)?.1;
        let cc = self.col_sectors.iter().find(|c| c.0 == col_vertex)?.1;
        Some(self.matrix.view((r0, c0), (rr, cc)).into_owned())
    }

    /// `max |V†V − 1|`.
    pub fn isometry_residual(&self) -> f64 {
        let n = self.matrix.ncols();
        if n == 0 {
            return 0.0;
        }
        let g = self.matrix.adjoint() * &self.matrix - CMat::identity(n, n);
        g.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }
}

/// The isometries of every stage plus the memory ranks at every level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CombCircuit {
    pub d: usize,
    pub stages: Vec<Vec<StageBlock>>,
    /// `ranks[k][sector]`, the multiplicity memory after `k` stages.
    pub ranks: Vec<Vec<usize>>,
    /// `irrep_dims[k][sector]`, the product of irrep dimensions carried alongside.
    pub irrep_dims: Vec<Vec<usize>>,
}

impl CombCircuit {
    pub fn isometry_residual(&self) -> f64 {
        self.stages.iter().flatten().map(StageBlock::isometry_residual).fold(0.0, f64::max)
    }

    /// Dimension of the full memory register after each stage.
    pub fn memory_dims(&self) -> Vec<usize> {
        self.ranks
            .iter()
            .zip(&self.irrep_dims)
            .map(|(r, dims)| r.iter().zip(dims).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// A purification `|W⟩⟩`, stored per memory sector as a matrix with rows over
/// the comb legs and columns over the memory basis of that sector.
#[derive(Clone, Debug)]
pub struct CombVector {
    pub d: usize,
    pub legs: Vec<Leg>,
    pub sectors: Vec<CMat>,
}

impl CombVector {
    pub fn norm_sqr(&self) -> f64 {
        self.sectors.iter().map(|s| s.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum()
    }

    /// `Tr_memory |W⟩⟩⟨⟨W|`.
    pub fn reduced_choi(&self) -> Result<ChoiMatrix> {
        let dim = self.d.pow(self.legs.len() as u32);
        guard(dim)?;
        let mut c = CMat::zeros(dim, dim);
        for s in &self.sectors {
            if s.ncols() > 0 {
                c += s * s.adjoint();
            }
        }
        ChoiMatrix::new(self.d, self.legs.clone(), c)
    }
}

fn check_input(residual: f64, min_eig: f64) -> Result<()> {
    if residual > INPUT_TOLERANCE || min_eig < -INPUT_TOLERANCE {
        return Err(CombError::Infeasible(format!(
            "blocks are not a valid comb (condition residual {residual:.2e}, min eigenvalue {min_eig:.2e})"
        )));
    }
    Ok(())
}

fn label_dim(b: &BratteliDiagram, level: usize, v: usize) -> usize {
    weyl_dim(b.label(level, v)) as usize
}

/// Stage isometries for a symmetric comb.
pub fn isometries_from_coefficients(model: &CombModel, blocks: &CoefficientBlocks) -> Result<CombCircuit> {
    check_input(model.comb_residual(blocks), blocks.min_eigenvalue())?;
    let sys = &model.system;
    let (bl, br) = (&sys.bl, &sys.br);
    let levels = model.level_blocks(blocks);
    let factors: Vec<Vec<MemoryFactor>> = levels.iter().map(|lv| memory_factors(lv)).collect();
    let mut stages = Vec::with_capacity(sys.depth());
    for k in 1..=sys.depth() {
        let (lo, hi) = (&sys.levels[k - 1], &sys.levels[k]);
        let mut stage = Vec::new();
        for rho2 in 0..br.levels[k].len() {
            for sigma in 0..bl.levels[k - 1].len() {
                let parents = br.parents(k, rho2);
                let children = bl.children(k - 1, sigma);
                let cols: Vec<(usize, usize)> = parents
                    .iter()
                    .map(|&rho| (rho, factors[k - 1][lo.block_id(sigma, rho)].rank()))
                    .collect();
                let rows: Vec<(usize, usize)> = children
                    .iter()
                    .map(|&s2| (s2, factors[k][hi.block_id(s2, rho2)].rank()))
                    .collect();
                let mut parts = Vec::with_capacity(children.len());
                for &s2 in &children {
                    let hb = hi.block_id(s2, rho2);
                    let mut row = Vec::with_capacity(parents.len());
                    for &rho in &parents {
                        let lb = lo.block_id(sigma, rho);
                        let blk_lo = &lo.blocks[lb];
                        let blk_hi = &hi.blocks[hb];
                        let mut ext = vec![0; blk_lo.size()];
                        for (t, tp) in bl.paths_at(k - 1, sigma).iter().enumerate() {
                            let t2 = bl.path_position(&tp.extend(s2));
                            for (q, qp) in br.paths_at(k - 1, rho).iter().enumerate() {
                                let q2 = br.path_position(&qp.extend(rho2));
                                ext[blk_lo.index(t, q)] = blk_hi.index(t2, q2);
                            }
                        }
                        let ratio = (label_dim(br, k - 1, rho) as f64 / label_dim(br, k, rho2) as f64).sqrt();
                        row.push(memory_block(&factors[k][hb], &factors[k - 1][lb], &ext, ratio));
                    }
                    parts.push(row);
                }
                stage.push(StageBlock::assemble((rho2, sigma), rows, cols, &parts));
            }
        }
        stages.push(stage);
    }
    let ranks = factors.iter().map(|lv| lv.iter().map(MemoryFactor::rank).collect()).collect();
    let irrep_dims = sys
        .levels
        .iter()
        .enumerate()
        .map(|(k, layout)| {
            layout.blocks.iter().map(|b| label_dim(bl, k, b.left) * label_dim(br, k, b.right)).collect()
        })
        .collect();
    Ok(CombCircuit { d: model.d, stages, ranks, irrep_dims })
}

/// Contracts the stage isometries into `|W⟩⟩` over the legs
/// `(I_1..I_n, F, P, O_1..O_n)`.
pub fn build_comb_vector(model: &CombModel, circuit: &CombCircuit) -> Result<CombVector> {
    let sys = &model.system;
    let (bl, br) = (&sys.bl, &sys.br);
    let d = model.d;
    guard(d.pow(2 * sys.depth() as u32))?;
    let mut sectors = vec![CMat::from_element(1, 1, cr(1.0))];
    for k in 1..=sys.depth() {
        let (lo, hi) = (&sys.levels[k - 1], &sys.levels[k]);
        let (leg_l, leg_r) = (bl.spec.legs[k - 1], br.spec.legs[k - 1]);
        let side = d.pow(k as u32);
        let mut next = vec![CMat::zeros(side * side, 0); hi.blocks.len()];
        for (b, nb) in hi.blocks.iter().enumerate() {
            let cols = label_dim(bl, k, nb.left) * label_dim(br, k, nb.right) * circuit.ranks[k][b];
            next[b] = CMat::zeros(side * side, cols);
        }
        for block in &circuit.stages[k - 1] {
            let (rho2, sigma) = block.sector;
            let d_sigma = label_dim(bl, k - 1, sigma);
            let d_rho2 = label_dim(br, k, rho2);
            for &s2 in &bl.children(k - 1, sigma) {
                let r2 = circuit.ranks[k][hi.block_id(s2, rho2)];
                if r2 == 0 {
                    continue;
                }
                let mut mixed = CMat::zeros((side / d) * side, d_sigma * d_rho2 * r2);
                for &rho in &br.parents(k, rho2) {
                    let lb = lo.block_id(sigma, rho);
                    let r1 = circuit.ranks[k - 1][lb];
                    if r1 == 0 {
                        continue;
                    }
                    let edge = model
                        .registry
                        .edge(br.label(k - 1, rho), leg_r, br.label(k, rho2))
                        .ok_or_else(|| CombError::Internal("missing right edge".into()))?;
                    let absorbed = attach_leg(&sectors[lb], 1, d_sigma, r1, &edge.gamma, d, 1.0);
                    let v = block.part(s2, rho).expect("stage block covers every parent and child");
                    mixed += apply_memory(&absorbed, d_sigma * d_rho2, &v);
                }
                let edge = model
                    .registry
                    .edge(bl.label(k - 1, sigma), leg_l, bl.label(k, s2))
                    .ok_or_else(|| CombError::Internal("missing left edge".into()))?;
                let factor = (d_sigma as f64 / label_dim(bl, k, s2) as f64).sqrt();
                next[hi.block_id(s2, rho2)] += attach_leg(&mixed, side, 1, d_rho2 * r2, &edge.gamma, d, factor);
            }
        }
        sectors = next;
    }
    Ok(CombVector { d, legs: standard_legs(model.n), sectors })
}

/// Outcome of rebuilding a comb from its circuit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// `||Tr_A |W⟩⟩⟨⟨W| − C||_F`.
    pub residual: f64,
    pub isometry_residual: f64,
    pub norm_sqr: f64,
    pub expected_norm_sqr: f64,
    pub memory_dims: Vec<usize>,
}

impl ReconstructionReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.residual <= tol && self.isometry_residual <= tol.sqrt()
    }
}

/// Builds the circuit for `blocks`, contracts it and compares the result with
/// the Choi matrix assembled directly from the blocks.
pub fn verify_theorem1(model: &CombModel, blocks: &CoefficientBlocks) -> Result<ReconstructionReport> {
    let circuit = isometries_from_coefficients(model, blocks)?;
    let w = build_comb_vector(model, &circuit)?;
    let rebuilt = w.reduced_choi()?;
    let direct = crate::choi_verify::choi_from_blocks(model, blocks)?;
    Ok(ReconstructionReport {
        residual: frob_c(&(&rebuilt.data - &direct.data)),
        isometry_residual: circuit.isometry_residual(),
        norm_sqr: w.norm_sqr(),
        expected_norm_sqr: (model.d as f64).powi(model.n as i32 + 1),
        memory_dims: circuit.memory_dims(),
    })
}

/// A comb over an alternating chain `(in_1, out_1, …, in_n, out_n)` whose
/// Choi matrix commutes with the joint action described by the chain.
#[derive(Clone, Debug)]
pub struct CovariantModel {
    pub n: usize,
    pub diagram: BratteliDiagram,
    pub registry: ModelRegistry,
    pub basis: PathBasis,
}

impl CovariantModel {
    pub fn new(spec: ChainSpec) -> Result<Self> {
        let len = spec.legs.len();
        if len == 0 || !len.is_multiple_of(2) {
            return Err(CombError::InvalidArgument("an alternating chain needs an even, positive number of legs".into()));
        }
        let diagram = BratteliDiagram::build(&spec);
        let mut registry = ModelRegistry::new(spec.d);
        let basis = PathBasis::build(&diagram, &mut registry)?;
        Ok(Self { n: len / 2, diagram, registry, basis })
    }

    /// Inputs transform with `Ū`, outputs with `U`.
    pub fn unitary_covariant(d: usize, n: usize) -> Result<Self> {
        let legs = (0..n).flat_map(|_| [LegKind::ConjDefining, LegKind::Defining]).collect();
        Self::new(ChainSpec::new(d, legs)?)
    }

    pub fn d(&self) -> usize {
        self.diagram.d()
    }

    fn dim(&self, level: usize, v: usize) -> usize {
        label_dim(&self.diagram, level, v)
    }

    /// `(in_1, out_1, …)` in the naming of [`Leg`].
    pub fn legs(&self) -> Vec<Leg> {
        (1..=self.n).flat_map(|k| [input_leg(k - 1), output_leg(k, self.n - 1)]).collect()
    }

    /// `C = 1/d^n`.
    pub fn depolarizing_blocks(&self) -> Vec<CMat> {
        let top = 2 * self.n;
        let norm = (self.d() as f64).powi(self.n as i32);
        (0..self.diagram.levels[top].len())
            .map(|v| {
                let m = self.diagram.paths_at(top, v).len();
                CMat::identity(m, m) * cr(self.dim(top, v) as f64 / norm)
            })
            .collect()
    }

    /// `x^μ_{rs} = Σ_{λ ∈ children(μ)} c^λ_{r→λ, s→λ}`.
    fn trace_leg(&self, level: usize, blocks: &[CMat]) -> Vec<CMat> {
        let b = &self.diagram;
        (0..b.levels[level - 1].len())
            .map(|mu| {
                let paths = b.paths_at(level - 1, mu);
                let mut x = CMat::zeros(paths.len(), paths.len());
                for lam in b.children(level - 1, mu) {
                    let pos: Vec<usize> = paths.iter().map(|p| b.path_position(&p.extend(lam))).collect();
                    for r in 0..paths.len() {
                        for s in 0..paths.len() {
                            x[(r, s)] += blocks[lam][(pos[r], pos[s])];
                        }
                    }
                }
                x
            })
            .collect()
    }

    /// Blocks of `C_k` for `k = 0..=n`, stored at even levels `2k`.
    pub fn level_blocks(&self, top: &[CMat]) -> Vec<Vec<CMat>> {
        let inv_d = cr(1.0 / self.d() as f64);
        let mut out = vec![top.to_vec()];
        for k in (1..=self.n).rev() {
            let mid = self.trace_leg(2 * k, out.last().unwrap());
            let low = self.trace_leg(2 * k - 1, &mid).into_iter().map(|m| m * inv_d).collect();
            out.push(low);
        }
        out.reverse();
        out
    }

    /// Largest violation of `Tr_{out_k} C_k = C_{k−1} ⊗ 1_{in_k}` and `C_0 = 1`.
    pub fn comb_residual(&self, top: &[CMat]) -> f64 {
        let b = &self.diagram;
        let levels = self.level_blocks(top);
        let mut worst = (levels[0][0][(0, 0)] - cr(1.0)).norm();
        for k in 1..=self.n {
            let x = self.trace_leg(2 * k, &levels[k]);
            for (mu, xm) in x.iter().enumerate() {
                let paths = b.paths_at(2 * k - 1, mu);
                let par: Vec<_> = paths.iter().map(|p| p.parent().unwrap()).collect();
                for r in 0..paths.len() {
                    for s in 0..paths.len() {
                        let rhs = if par[r].end() == par[s].end() {
                            let nu = par[r].end();
                            let ratio = self.dim(2 * k - 1, mu) as f64 / self.dim(2 * k - 2, nu) as f64;
                            levels[k - 1][nu][(b.path_position(&par[r]), b.path_position(&par[s]))] * ratio
                        } else {
                            C0
                        };
                        worst = worst.max((xm[(r, s)] - rhs).norm());
                    }
                }
            }
        }
        worst
    }

    /// `C = Σ_λ Σ_{pq} c^λ_{pq} E^λ_{pq} / d_λ`.
    pub fn choi(&self, top: &[CMat]) -> Result<ChoiMatrix> {
        let d = self.d();
        let lvl = 2 * self.n;
        let dim = d.pow(lvl as u32);
        guard(dim)?;
        let mut c = CMat::zeros(dim, dim);
        for (v, x) in top.iter().enumerate() {
            let us: Vec<CMat> =
                self.basis.isometries_at(lvl, v).iter().map(|u| u.map(cr)).collect();
            let dl = self.dim(lvl, v) as f64;
            for (p, up) in us.iter().enumerate() {
                for (q, uq) in us.iter().enumerate() {
                    if x[(p, q)] != C0 {
                        c += up * uq.transpose() * (x[(p, q)] / dl);
                    }
                }
            }
        }
        ChoiMatrix::new(d, self.legs(), c)
    }

    /// `c^λ_{pq} = Tr(C E^λ_{qp})`.
    pub fn project(&self, c: &ChoiMatrix) -> Result<Vec<CMat>> {
        let c = c.permuted(&self.legs())?;
        let lvl = 2 * self.n;
        Ok((0..self.diagram.levels[lvl].len())
            .map(|v| {
                let us: Vec<CMat> =
                    self.basis.isometries_at(lvl, v).iter().map(|u| u.map(cr)).collect();
                CMat::from_fn(us.len(), us.len(), |p, q| {
                    (us[p].transpose() * &c.data * &us[q]).trace()
                })
            })
            .collect())
    }

    /// Blocks of a random comb twirled onto the invariant subspace.
    pub fn random_feasible_blocks<R: Rng + ?Sized>(&self, memory: usize, rng: &mut R) -> Result<Vec<CMat>> {
        let c = random_comb_choi(self.d(), self.n - 1, memory, rng)?;
        self.project(&c)
    }

    pub fn isometries(&self, top: &[CMat]) -> Result<CombCircuit> {
        let min_eig = top
            .iter()
            .filter(|b| b.nrows() > 0)
            .map(crate::linalg::min_eigenvalue_herm)
            .fold(f64::INFINITY, f64::min);
        check_input(self.comb_residual(top), min_eig)?;
        let b = &self.diagram;
        let levels = self.level_blocks(top);
        let factors: Vec<Vec<MemoryFactor>> = levels.iter().map(|lv| memory_factors(lv)).collect();
        let mut stages = Vec::with_capacity(self.n);
        for k in 1..=self.n {
            let mid = 2 * k - 1;
            let mut stage = Vec::new();
            for mu in 0..b.levels[mid].len() {
                let parents = b.parents(mid, mu);
                let children = b.children(mid, mu);
                let cols = parents.iter().map(|&nu| (nu, factors[k - 1][nu].rank())).collect();
                let rows = children.iter().map(|&lam| (lam, factors[k][lam].rank())).collect();
                let mut parts = Vec::with_capacity(children.len());
                for &lam in &children {
                    let mut row = Vec::with_capacity(parents.len());
                    for &nu in &parents {
                        let ext: Vec<usize> = b
                            .paths_at(mid - 1, nu)
                            .iter()
                            .map(|p| b.path_position(&p.extend(mu).extend(lam)))
                            .collect();
                        let ratio = (self.dim(mid - 1, nu) as f64 / self.dim(mid, mu) as f64).sqrt();
                        row.push(memory_block(&factors[k][lam], &factors[k - 1][nu], &ext, ratio));
                    }
                    parts.push(row);
                }
                stage.push(StageBlock::assemble((mu, 0), rows, cols, &parts));
            }
            stages.push(stage);
        }
        let ranks = factors.iter().map(|lv| lv.iter().map(MemoryFactor::rank).collect()).collect();
        let irrep_dims = (0..=self.n)
            .map(|k| (0..b.levels[2 * k].len()).map(|v| self.dim(2 * k, v)).collect())
            .collect();
        Ok(CombCircuit { d: self.d(), stages, ranks, irrep_dims })
    }

    pub fn comb_vector(&self, circuit: &CombCircuit) -> Result<CombVector> {
        let b = &self.diagram;
        let d = self.d();
        guard(d.pow(2 * self.n as u32))?;
        let mut sectors = vec![CMat::from_element(1, 1, cr(1.0))];
        for k in 1..=self.n {
            let mid = 2 * k - 1;
            let rows = d.pow(2 * k as u32);
            let mut next: Vec<CMat> = (0..b.levels[2 * k].len())
                .map(|lam| CMat::zeros(rows, self.dim(2 * k, lam) * circuit.ranks[k][lam]))
                .collect();
            for block in &circuit.stages[k - 1] {
                let mu = block.sector.0;
                let d_mu = self.dim(mid, mu);
                for &lam in &b.children(mid, mu) {
                    let r2 = circuit.ranks[k][lam];
                    if r2 == 0 {
                        continue;
                    }
                    let mut mixed = CMat::zeros(rows / d, d_mu * r2);
                    for &nu in &b.parents(mid, mu) {
                        let r1 = circuit.ranks[k - 1][nu];
                        if r1 == 0 {
                            continue;
                        }
                        let edge = self
                            .registry
                            .edge(b.label(mid - 1, nu), b.spec.legs[mid - 1], b.label(mid, mu))
                            .ok_or_else(|| CombError::Internal("missing input edge".into()))?;
                        let absorbed = attach_leg(&sectors[nu], 1, 1, r1, &edge.gamma, d, 1.0);
                        let v = block.part(lam, nu).expect("stage block covers every parent and child");
                        mixed += apply_memory(&absorbed, d_mu, &v);
                    }
                    let edge = self
                        .registry
                        .edge(b.label(mid, mu), b.spec.legs[mid], b.label(2 * k, lam))
                        .ok_or_else(|| CombError::Internal("missing output edge".into()))?;
                    let factor = (d_mu as f64 / self.dim(2 * k, lam) as f64).sqrt();
                    next[lam] += attach_leg(&mixed, 1, 1, r2, &edge.gamma, d, factor);
                }
            }
            sectors = next;
        }
        Ok(CombVector { d, legs: self.legs(), sectors })
    }
}

/// Circuit reconstruction check for a single-chain covariant comb.
pub fn verify_theorem_covariant(model: &CovariantModel, top: &[CMat]) -> Result<ReconstructionReport> {
    let circuit = model.isometries(top)?;
    let w = model.comb_vector(&circuit)?;
    let rebuilt = w.reduced_choi()?;
    let direct = model.choi(top)?;
    Ok(ReconstructionReport {
        residual: frob_c(&(&rebuilt.data - &direct.data)),
        isometry_residual: circuit.isometry_residual(),
        norm_sqr: w.norm_sqr(),
        expected_norm_sqr: (model.d() as f64).powi(model.n as i32),
        memory_dims: circuit.memory_dims(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choi_verify::{check_comb_conditions, random_feasible_blocks};
    use crate::haar::seeded_rng;
    use crate::rep_theory::Task;

    #[test]
    fn depolarizing_comb_is_rebuilt() {
        for (task, d, n) in [(Task::Transpose, 2, 1), (Task::Invert, 2, 2), (Task::Transpose, 3, 1)] {
            let model = CombModel::new(task, d, n).unwrap();
            let report = verify_theorem1(&model, &model.depolarizing_blocks()).unwrap();
            assert!(report.residual < 1e-10, "{task:?} {d} {n}: {report:?}");
            assert!((report.norm_sqr - report.expected_norm_sqr).abs() < 1e-9);
        }
    }

    #[test]
    fn random_combs_are_rebuilt() {
        let mut rng = seeded_rng(11);
        for (task, d, n) in [(Task::Invert, 2, 1), (Task::Transpose, 2, 2)] {
            let model = CombModel::new(task, d, n).unwrap();
            for _ in 0..2 {
                let blocks = random_feasible_blocks(&model, 3, &mut rng).unwrap();
                let report = verify_theorem1(&model, &blocks).unwrap();
                assert!(report.residual < 1e-8, "{report:?}");
                assert!(report.isometry_residual < 1e-6, "{report:?}");
            }
        }
    }

    #[test]
    fn invalid_blocks_are_rejected() {
        let model = CombModel::new(Task::Transpose, 2, 1).unwrap();
        let mut blocks = model.depolarizing_blocks();
        blocks.blocks[0] *= cr(3.0);
        assert!(matches!(verify_theorem1(&model, &blocks), Err(CombError::Infeasible(_))));
    }

    #[test]
    fn covariant_depolarizing_and_random() {
        let model = CovariantModel::unitary_covariant(2, 2).unwrap();
        let dep = model.depolarizing_blocks();
        assert!(model.comb_residual(&dep) < 1e-12);
        let c = model.choi(&dep).unwrap();
        let std = c.permuted(&standard_legs(1)).unwrap();
        assert!(check_comb_conditions(&std, 1).unwrap().max_residual() < 1e-12);
        let report = verify_theorem_covariant(&model, &dep).unwrap();
        assert!(report.residual < 1e-10, "{report:?}");

        let mut rng = seeded_rng(5);
        let blocks = model.random_feasible_blocks(2, &mut rng).unwrap();
        assert!(model.comb_residual(&blocks) < 1e-10);
        let report = verify_theorem_covariant(&model, &blocks).unwrap();
        assert!(report.residual < 1e-8, "{report:?}");
    }
}
