use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use qcomb::{CMat, CoefficientBlocks, CombModel, Task};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::verify::VerificationSection;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub status: String,
    pub error: Option<String>,
    pub sdp: Option<SdpSection>,
    pub nlopt: Option<NloptSection>,
    /// `nlopt.fidelity - sdp.fidelity` when both methods ran.
    pub method_gap: Option<f64>,
    pub blocks: Vec<BlockSummary>,
    pub verification: Option<VerificationSection>,
    pub param_counts: Option<ParamCounts>,
    pub conventions: Conventions,
    pub versions: Versions,
    pub timing: Timing,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub method: String,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub verify: bool,
    pub mc_samples: usize,
    pub force: bool,
}

impl From<&RunConfig> for ConfigEcho {
    fn from(c: &RunConfig) -> Self {
        Self {
            task: c.task,
            d: c.d,
            n: c.n,
            method: format!("{:?}", c.method).to_lowercase(),
            tol: c.tol,
            restarts: c.restarts,
            seed: c.seed,
            verify: c.verify,
            mc_samples: c.mc_samples,
            force: c.force,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SdpSection {
    pub status: String,
    pub fidelity: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solver_tolerance: f64,
    pub comb_residual: f64,
    pub iterations: usize,
    pub reduced_variables: usize,
    pub constraints: usize,
    pub dropped_constraints: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NloptSection {
    pub fidelity: f64,
    pub gradient_norm: f64,
    pub gradient_tolerance: f64,
    pub converged: bool,
    pub restarts: usize,
    pub restart_fidelities: Vec<f64>,
    pub variant: usize,
    pub variant_count: usize,
    pub variant_fidelities: Vec<f64>,
    pub manifold_dim: usize,
    /// Comb-condition residual of the blocks induced by the best isometries.
    pub comb_residual: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlockSummary {
    pub left: String,
    pub right: String,
    pub irrep_dims: (u64, u64),
    pub size: usize,
    pub rank: usize,
    pub rank_tolerance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamCounts {
    pub symmetric: u64,
    /// Decimal string so that counts beyond 2^53 survive JSON readers.
    pub naive: String,
    pub ratio: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Conventions {
    pub objective: String,
    pub leg_order: String,
    pub permutation_direction: String,
    pub conjugation_placement: String,
    pub level_normalization: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            objective: qcomb::comb_sdp::OBJECTIVE_CONVENTION.to_string(),
            leg_order: "(I_1..I_n, F, P, O_1..O_n)".into(),
            permutation_direction: "cyclic shift pairs I_i with O_i and F with P".into(),
            conjugation_placement:
                "transpose: conjugate leg last on the left chain and first on the right chain; invert: all legs defining"
                    .into(),
            level_normalization: "C_{k-1} = Tr C_k / d with C_0 = 1".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Versions {
    pub qcomb: String,
    pub schema: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self { qcomb: env!("CARGO_PKG_VERSION").to_string(), schema: SCHEMA_VERSION }
    }
}

/// Wall-clock data. This is the only part of a record that varies between
/// identical runs.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub sdp_seconds: Option<f64>,
    pub nlopt_seconds: Option<f64>,
    pub verify_seconds: Option<f64>,
    pub total_seconds: f64,
}

pub fn summarize_blocks(model: &CombModel, blocks: &CoefficientBlocks, rank_tol: f64) -> Vec<BlockSummary> {
    let scale = blocks
        .blocks
        .iter()
        .filter(|b| b.nrows() > 0)
        .map(|b| qcomb::linalg::herm_eigen(b).0.iter().cloned().fold(0.0_f64, f64::max))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    blocks
        .blocks
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let (left, right) = model.top_labels(b);
            let rank = if m.nrows() == 0 {
                0
            } else {
                qcomb::linalg::herm_eigen(m).0.iter().filter(|&&e| e > rank_tol * scale).count()
            };
            BlockSummary { left, right, irrep_dims: model.block_dims(b), size: m.nrows(), rank, rank_tolerance: rank_tol }
        })
        .collect()
}

/// One top-level block stored as row-major real and imaginary parts.
#[derive(Debug, Serialize, Deserialize)]
pub struct StoredBlock {
    pub left: String,
    pub right: String,
    pub size: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlocksFile {
    pub schema_version: u32,
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub source: String,
    pub blocks: Vec<StoredBlock>,
}

impl BlocksFile {
    pub fn new(model: &CombModel, blocks: &CoefficientBlocks, source: &str) -> Self {
        let stored = blocks
            .blocks
            .iter()
            .enumerate()
            .map(|(b, m)| {
                let (left, right) = model.top_labels(b);
                let size = m.nrows();
                let mut re = Vec::with_capacity(size * size);
                let mut im = Vec::with_capacity(size * size);
                for i in 0..size {
                    for j in 0..size {
                        re.push(m[(i, j)].re);
                        im.push(m[(i, j)].im);
                    }
                }
                StoredBlock { left, right, size, re, im }
            })
            .collect();
        Self { schema_version: SCHEMA_VERSION, task: model.task, d: model.d, n: model.n, source: source.into(), blocks: stored }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading blocks file {}", path.display()))?;
        let file: Self =
            serde_json::from_str(&text).with_context(|| format!("malformed blocks file {}", path.display()))?;
        if file.schema_version != SCHEMA_VERSION {
            bail!("blocks file schema {} is not supported (expected {SCHEMA_VERSION})", file.schema_version);
        }
        Ok(file)
    }

    /// Checks the layout against `model` and rebuilds the coefficient blocks.
    pub fn to_blocks(&self, model: &CombModel) -> Result<CoefficientBlocks> {
        let top = model.top();
        if self.blocks.len() != top.blocks.len() {
            bail!("blocks file has {} blocks, the model expects {}", self.blocks.len(), top.blocks.len());
        }
        let mut out = Vec::with_capacity(self.blocks.len());
        for (b, s) in self.blocks.iter().enumerate() {
            let expected = top.blocks[b].size();
            let (left, right) = model.top_labels(b);
            if s.size != expected || s.left != left || s.right != right {
                bail!("block {b} should be ({left}, {right}) of size {expected}, found ({}, {}) of size {}", s.left, s.right, s.size);
            }
            if s.re.len() != expected * expected || s.im.len() != expected * expected {
                bail!("block {b} has the wrong number of entries");
            }
            if s.re.iter().chain(&s.im).any(|v| !v.is_finite()) {
                bail!("block {b} contains non-finite entries");
            }
            out.push(CMat::from_fn(expected, expected, |i, j| {
                Complex64::new(s.re[i * expected + j], s.im[i * expected + j])
            }));
        }
        Ok(CoefficientBlocks { blocks: out })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_file_round_trip() {
        let model = CombModel::new(Task::Transpose, 2, 1).unwrap();
        let blocks = model.depolarizing_blocks();
        let file = BlocksFile::new(&model, &blocks, "test");
        let text = serde_json::to_string(&file).unwrap();
        let back: BlocksFile = serde_json::from_str(&text).unwrap();
        let rebuilt = back.to_blocks(&model).unwrap();
        for (a, b) in blocks.blocks.iter().zip(&rebuilt.blocks) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn wrong_cell_is_rejected() {
        let model = CombModel::new(Task::Transpose, 2, 1).unwrap();
        let other = CombModel::new(Task::Transpose, 2, 2).unwrap();
        let file = BlocksFile::new(&model, &model.depolarizing_blocks(), "test");
        assert!(file.to_blocks(&other).is_err());
    }
}
