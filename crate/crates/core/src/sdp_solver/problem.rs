use serde::{Deserialize, Serialize};

use crate::error::{CombError, Result};
use crate::linalg::RMat;

/// One entry `(block, row, col, value)` of a block-diagonal symmetric matrix,
/// stored for `row <= col`; the mirrored entry is implied.
pub type SymEntry = (usize, usize, usize, f64);

/// Sparse block-diagonal symmetric matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseSym {
    pub entries: Vec<SymEntry>,
}

impl SparseSym {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: usize, r: usize, c: usize, v: f64) {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        self.entries.push((block, r, c, v));
    }

    /// Merges duplicates and drops explicit zeros, in a canonical order.
    pub fn normalize(&mut self) {
        self.entries.sort_by_key(|a| (a.0, a.1, a.2));
        let mut out: Vec<SymEntry> = Vec::with_capacity(self.entries.len());
        for &e in &self.entries {
            match out.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (e.0, e.1, e.2) => last.3 += e.3,
                _ => out.push(e),
            }
        }
        out.retain(|e| e.3 != 0.0);
        self.entries = out;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `<A, X> = sum_b Tr(A_b X_b)`.
    pub fn inner(&self, x: &[RMat]) -> f64 {
        self.entries
            .iter()
            .map(|&(b, r, c, v)| if r == c { v * x[b][(r, c)] } else { v * (x[b][(r, c)] + x[b][(c, r)]) })
            .sum()
    }

    /// Frobenius inner product of two sparse symmetric matrices (both normalized).
    pub fn dot(&self, other: &SparseSym) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let a = self.entries[i];
            let b = other.entries[j];
            match (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += if a.1 == a.2 { a.3 * b.3 } else { 2.0 * a.3 * b.3 };
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            e.3 *= s;
        }
    }

    /// Adds `s * A` into the dense blocks `out`.
    pub fn add_to(&self, out: &mut [RMat], s: f64) {
        for &(b, r, c, v) in &self.entries {
            out[b][(r, c)] += s * v;
            if r != c {
                out[b][(c, r)] += s * v;
            }
        }
    }

    pub fn to_dense(&self, sizes: &[usize]) -> Vec<RMat> {
        let mut out: Vec<RMat> = sizes.iter().map(|&n| RMat::zeros(n, n)).collect();
        self.add_to(&mut out, 1.0);
        out
    }
}

/// `maximize <C, X>` subject to `<A_i, X> = b_i` and `X ⪰ 0`, with `X`
/// block-diagonal of the given block sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub objective: SparseSym,
    pub constraints: Vec<SparseSym>,
    pub rhs: Vec<f64>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.constraints.len() != self.rhs.len() {
            return Err(CombError::DimensionMismatch(format!(
                "{} constraints but {} right-hand sides",
                self.constraints.len(),
                self.rhs.len()
            )));
        }
        let check = |m: &SparseSym| -> Result<()> {
            for &(b, r, c, v) in &m.entries {
                let n = *self.block_sizes.get(b).ok_or_else(|| {
                    CombError::DimensionMismatch(format!("block {b} does not exist"))
                })?;
                if r > c || c >= n || !v.is_finite() {
                    return Err(CombError::DimensionMismatch(format!(
                        "entry ({b}, {r}, {c}) invalid for block size {n}"
                    )));
                }
            }
            Ok(())
        };
        check(&self.objective)?;
        self.constraints.iter().try_for_each(check)
    }

    pub fn total_dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Number of free scalars in the symmetric blocks.
    pub fn num_variables(&self) -> usize {
        self.block_sizes.iter().map(|n| n * (n + 1) / 2).sum()
    }

    pub fn zero_blocks(&self) -> Vec<RMat> {
        self.block_sizes.iter().map(|&n| RMat::zeros(n, n)).collect()
    }
}
