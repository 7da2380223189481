//! The symmetry-reduced comb SDP: top-level PSD blocks `C^{λμ}`, linear comb
//! conditions with the lower levels eliminated, and the fidelity objective.

pub mod levels;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CombError, Result};
use crate::linalg::{leg_permutation_map, CMat, RMat};
use crate::matrix_units::{permute_rows_inverse, ModelRegistry, PathBasis};
use crate::rep_theory::{chain_for_task, weyl_dim, Task};
use crate::sdp_solver::{SdpProblem, SparseSym};

pub use levels::{comb_condition_residual, Coef, Layout, LevelCoeffs, LevelSystem, LinForm, PairBlock};

/// Leg map pairing the comb outputs with the comb inputs: `I_i ↔ O_i` and
/// `F ↔ P`. Entry `j` is the position in `(P, O_1..O_n)` of leg `j` of
/// `(I_1..I_n, F)`, i.e. the cyclic shift by one.
pub fn cyclic_pairing(n: usize) -> Vec<usize> {
    (0..=n).map(|j| (j + 1) % (n + 1)).collect()
}

/// Description of how the objective is evaluated, recorded with every result.
pub const OBJECTIVE_CONVENTION: &str =
    "F = (1/d^2) sum_lambda kappa^T C^{lambda,lambda} kappa / d_lambda, kappa_SQ = Tr(U_S^T psi^-1 U_Q)/d_lambda, psi = cyclic shift (I_i->O_i, F->P)";

/// Top-level reduced Choi data: one Hermitian block per `(λ, μ)`, rows indexed by `(S, Q)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientBlocks {
    pub blocks: Vec<CMat>,
}

impl CoefficientBlocks {
    pub fn from_real(blocks: &[RMat]) -> Self {
        Self { blocks: blocks.iter().map(|b| b.map(|x| Complex64::new(x, 0.0))).collect() }
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b - b.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm())))
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.nrows() > 0)
            .map(crate::linalg::min_eigenvalue_herm)
            .fold(f64::INFINITY, f64::min)
    }

    /// Convex combination `(1 - t) self + t other`.
    pub fn mix(&self, other: &Self, t: f64) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a * Complex64::new(1.0 - t, 0.0) + b * Complex64::new(t, 0.0))
                .collect(),
        }
    }
}

/// Per top block, `Some((κ, scale))` when the objective weight is `scale · κ κ^T`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectiveCoeffs {
    pub weights: Vec<Option<(Vec<f64>, f64)>>,
}

impl ObjectiveCoeffs {
    pub fn weight_matrix(&self, b: usize) -> Option<RMat> {
        self.weights[b].as_ref().map(|(k, s)| {
            let v = nalgebra::DVector::from_column_slice(k);
            &v * v.transpose() * *s
        })
    }

    pub fn evaluate(&self, blocks: &CoefficientBlocks) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (w, blk) in self.weights.iter().zip(&blocks.blocks) {
            if let Some((kappa, s)) = w {
                let k = nalgebra::DVector::from_iterator(kappa.len(), kappa.iter().map(|x| Complex64::new(*x, 0.0)));
                total += (k.transpose() * blk * &k)[(0, 0)] * *s;
            }
        }
        total
    }
}

/// Diagrams, irrep models and path bases for one `(task, d, n)` cell.
#[derive(Clone, Debug)]
pub struct CombModel {
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub system: LevelSystem,
    pub registry: ModelRegistry,
    pub basis_l: PathBasis,
    pub basis_r: PathBasis,
}

impl CombModel {
    pub fn new(task: Task, d: usize, n: usize) -> Result<Self> {
        let (bl, br) = chain_for_task(task, d, n)?;
        let mut registry = ModelRegistry::new(d);
        let basis_l = PathBasis::build(&bl, &mut registry)?;
        let basis_r = PathBasis::build(&br, &mut registry)?;
        let system = LevelSystem::new(bl, br);
        Ok(Self { task, d, n, system, registry, basis_l, basis_r })
    }

    pub fn top(&self) -> &Layout {
        self.system.top()
    }

    pub fn top_labels(&self, b: usize) -> (String, String) {
        let blk = &self.top().blocks[b];
        let k = self.n + 1;
        (self.system.bl.label(k, blk.left).to_string(), self.system.br.label(k, blk.right).to_string())
    }

    pub fn block_dims(&self, b: usize) -> (u64, u64) {
        let blk = &self.top().blocks[b];
        let k = self.n + 1;
        (weyl_dim(self.system.bl.label(k, blk.left)), weyl_dim(self.system.br.label(k, blk.right)))
    }

    /// Objective weights from the cyclic pairing of path isometries.
    pub fn objective_coefficients(&self) -> ObjectiveCoeffs {
        let d = self.d;
        let k = self.n + 1;
        let map = leg_permutation_map(d, &cyclic_pairing(self.n));
        let weights = self
            .top()
            .blocks
            .iter()
            .map(|blk| {
                let lam = self.system.bl.label(k, blk.left);
                if lam != self.system.br.label(k, blk.right) {
                    return None;
                }
                let dl = weyl_dim(lam) as f64;
                let us = self.basis_l.isometries_at(k, blk.left);
                let uq: Vec<RMat> =
                    self.basis_r.isometries_at(k, blk.right).iter().map(|u| permute_rows_inverse(u, &map)).collect();
                let mut kappa = vec![0.0; blk.size()];
                for (s, u) in us.iter().enumerate() {
                    for (q, w) in uq.iter().enumerate() {
                        kappa[blk.index(s, q)] = u.dot(w) / dl;
                    }
                }
                Some((kappa, 1.0 / ((d * d) as f64 * dl)))
            })
            .collect();
        ObjectiveCoeffs { weights }
    }

    /// The discard-and-reprepare comb `C = 1 / d^{n+1}`.
    pub fn depolarizing_blocks(&self) -> CoefficientBlocks {
        let k = self.n + 1;
        let norm = (self.d as f64).powi(k as i32);
        let blocks = self
            .top()
            .blocks
            .iter()
            .map(|blk| {
                let dl = weyl_dim(self.system.bl.label(k, blk.left)) as f64;
                let dm = weyl_dim(self.system.br.label(k, blk.right)) as f64;
                CMat::identity(blk.size(), blk.size()) * Complex64::new(dl * dm / norm, 0.0)
            })
            .collect();
        CoefficientBlocks { blocks }
    }

    pub fn to_level_coeffs(&self, blocks: &CoefficientBlocks) -> LevelCoeffs<Complex64> {
        blocks.blocks.iter().map(|b| b.transpose().iter().copied().collect()).collect()
    }

    pub fn comb_residual(&self, blocks: &CoefficientBlocks) -> f64 {
        comb_condition_residual(&self.system, self.to_level_coeffs(blocks))
    }

    pub fn fidelity(&self, blocks: &CoefficientBlocks) -> f64 {
        self.objective_coefficients().evaluate(blocks).re
    }

    /// Assembles `max <W, X>` subject to the reduced comb conditions.
    pub fn assemble_sdp(&self) -> Result<SdpProblem> {
        let top = self.top();
        if top.blocks.is_empty() {
            return Err(CombError::InvalidArgument("empty diagrams".into()));
        }
        let mut offsets = Vec::with_capacity(top.blocks.len());
        let mut vars: Vec<(usize, usize, usize)> = Vec::new();
        for (b, blk) in top.blocks.iter().enumerate() {
            offsets.push(vars.len());
            let n = blk.size();
            for r in 0..n {
                for c in r..n {
                    vars.push((b, r, c));
                }
            }
        }
        let var_id = |b: usize, r: usize, c: usize, n: usize| -> u32 {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            (offsets[b] + r * n - r * (r + 1) / 2 + c) as u32
        };
        let top_forms: LevelCoeffs<LinForm> = top
            .blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                let n = blk.size();
                (0..n * n).map(|i| LinForm::var(var_id(b, i / n, i % n, n))).collect()
            })
            .collect();
        let all = self.system.all_levels(top_forms);

        let to_sparse = |form: &LinForm| -> SparseSym {
            let mut s = SparseSym::new();
            for &(v, coef) in &form.0 {
                let (b, r, c) = vars[v as usize];
                s.push(b, r, c, if r == c { coef } else { coef / 2.0 });
            }
            s.normalize();
            s
        };

        let mut constraints = Vec::new();
        let mut rhs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        constraints.push(to_sparse(&all[0][0][0]));
        rhs.push(1.0);
        for k in 1..=self.system.depth() {
            let lhs = self.system.condition_lhs(k, &all[k]);
            let rhs_forms = self.system.condition_rhs(k, &all[k - 1]);
            for (bid, blk) in self.system.mixed[k].blocks.iter().enumerate() {
                let n = blk.size();
                for r in 0..n {
                    for c in r..n {
                        let mut f = lhs[bid][r * n + c].clone();
                        f.axpy(-1.0, &rhs_forms[bid][r * n + c]);
                        if f.is_zero(1e-14) {
                            continue;
                        }
                        let s = to_sparse(&f);
                        let key: Vec<(usize, usize, usize, u64)> =
                            s.entries.iter().map(|e| (e.0, e.1, e.2, e.3.to_bits())).collect();
                        if seen.insert(key) {
                            constraints.push(s);
                            rhs.push(0.0);
                        }
                    }
                }
            }
        }

        let coeffs = self.objective_coefficients();
        let mut objective = SparseSym::new();
        for (b, w) in coeffs.weights.iter().enumerate() {
            if let Some((kappa, s)) = w {
                let n = kappa.len();
                for r in 0..n {
                    for c in r..n {
                        let v = s * kappa[r] * kappa[c];
                        if v != 0.0 {
                            objective.push(b, r, c, v);
                        }
                    }
                }
            }
        }
        objective.normalize();
        let problem =
            SdpProblem { block_sizes: top.blocks.iter().map(|b| b.size()).collect(), objective, constraints, rhs };
        problem.validate()?;
        Ok(problem)
    }

    pub fn blocks_from_solution(&self, x: &[RMat]) -> CoefficientBlocks {
        CoefficientBlocks::from_real(x)
    }

    /// Lower-level blocks `c^k` for every level, as complex matrices.
    pub fn level_blocks(&self, blocks: &CoefficientBlocks) -> Vec<Vec<CMat>> {
        let all = self.system.all_levels(self.to_level_coeffs(blocks));
        all.iter()
            .zip(&self.system.levels)
            .map(|(data, layout)| {
                data.iter()
                    .zip(&layout.blocks)
                    .map(|(v, blk)| DMatrix::from_row_slice(blk.size(), blk.size(), v))
                    .collect()
            })
            .collect()
    }
}
