//! Level-by-level coefficient bookkeeping for the reduced comb conditions.
//!
//! A level-`k` coefficient set holds one square block per pair
//! `(ν ∈ B_L level k, ω ∈ B_R level k)`, indexed by pairs of paths
//! `(s, q)` with `s` ending at `ν` and `q` ending at `ω`. The same maps act on
//! numbers (to check a candidate comb) and on symbolic linear forms (to emit
//! SDP constraints on the top level only).

use std::ops::AddAssign;

use num_complex::Complex64;

use crate::rep_theory::{weyl_dim, BratteliDiagram};

/// Scalars the level maps can act on.
pub trait Coef: Clone {
    fn zero() -> Self;
    fn axpy(&mut self, s: f64, x: &Self);
}

impl Coef for f64 {
    fn zero() -> Self {
        0.0
    }
    fn axpy(&mut self, s: f64, x: &Self) {
        *self += s * x;
    }
}

impl Coef for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn axpy(&mut self, s: f64, x: &Self) {
        *self += x * s;
    }
}

/// Sparse linear form over the top-level variables, sorted by variable id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinForm(pub Vec<(u32, f64)>);

impl LinForm {
    pub fn var(id: u32) -> Self {
        LinForm(vec![(id, 1.0)])
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.0.iter().all(|t| t.1.abs() <= tol)
    }
}

impl AddAssign<&LinForm> for LinForm {
    fn add_assign(&mut self, rhs: &LinForm) {
        self.axpy(1.0, rhs);
    }
}

impl Coef for LinForm {
    fn zero() -> Self {
        LinForm(Vec::new())
    }
    fn axpy(&mut self, s: f64, x: &Self) {
        if x.0.is_empty() || s == 0.0 {
            return;
        }
        let a = std::mem::take(&mut self.0);
        let mut out = Vec::with_capacity(a.len() + x.0.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < x.0.len() {
            if j == x.0.len() || (i < a.len() && a[i].0 < x.0[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || x.0[j].0 < a[i].0 {
                out.push((x.0[j].0, s * x.0[j].1));
                j += 1;
            } else {
                let v = a[i].1 + s * x.0[j].1;
                if v != 0.0 {
                    out.push((a[i].0, v));
                }
                i += 1;
                j += 1;
            }
        }
        self.0 = out;
    }
}

/// A square block addressed by a left and a right vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairBlock {
    pub left: usize,
    pub right: usize,
    pub m_left: usize,
    pub m_right: usize,
}

impl PairBlock {
    pub fn size(&self) -> usize {
        self.m_left * self.m_right
    }

    pub fn index(&self, s: usize, q: usize) -> usize {
        s * self.m_right + q
    }
}

/// Blocks over `B_L level left_level × B_R level right_level`.
#[derive(Clone, Debug)]
pub struct Layout {
    pub left_level: usize,
    pub right_level: usize,
    pub n_right: usize,
    pub blocks: Vec<PairBlock>,
}

impl Layout {
    pub fn new(bl: &BratteliDiagram, left_level: usize, br: &BratteliDiagram, right_level: usize) -> Self {
        let n_right = br.levels[right_level].len();
        let mut blocks = Vec::new();
        for l in 0..bl.levels[left_level].len() {
            for r in 0..n_right {
                blocks.push(PairBlock {
                    left: l,
                    right: r,
                    m_left: bl.paths_at(left_level, l).len(),
                    m_right: br.paths_at(right_level, r).len(),
                });
            }
        }
        Self { left_level, right_level, n_right, blocks }
    }

    pub fn block_id(&self, left: usize, right: usize) -> usize {
        left * self.n_right + right
    }

    pub fn zeros<T: Coef>(&self) -> Vec<Vec<T>> {
        self.blocks.iter().map(|b| vec![T::zero(); b.size() * b.size()]).collect()
    }
}

/// Path extension and truncation tables of one diagram.
#[derive(Clone, Debug)]
struct PathMaps {
    /// `ext[k][v][pos]`: `(child vertex, position)` of every one-step extension.
    ext: Vec<Vec<Vec<Vec<(usize, usize)>>>>,
    /// `par[k][v][pos]`: `(parent vertex, position)`, for `k ≥ 1`.
    par: Vec<Vec<Vec<(usize, usize)>>>,
}

impl PathMaps {
    fn new(b: &BratteliDiagram) -> Self {
        let depth = b.depth();
        let mut ext = Vec::with_capacity(depth);
        let mut par = vec![Vec::new()];
        for k in 0..=depth {
            if k < depth {
                let mut lvl = Vec::new();
                for v in 0..b.levels[k].len() {
                    let mut per_path = Vec::new();
                    for p in b.paths_at(k, v) {
                        let list = b
                            .children(k, v)
                            .into_iter()
                            .map(|c| (c, b.path_position(&p.extend(c))))
                            .collect();
                        per_path.push(list);
                    }
                    lvl.push(per_path);
                }
                ext.push(lvl);
            }
            if k >= 1 {
                let mut lvl = Vec::new();
                for v in 0..b.levels[k].len() {
                    let list = b
                        .paths_at(k, v)
                        .iter()
                        .map(|p| {
                            let pp = p.parent().unwrap();
                            (pp.end(), b.path_position(&pp))
                        })
                        .collect();
                    lvl.push(list);
                }
                par.push(lvl);
            }
        }
        Self { ext, par }
    }
}

/// Diagrams plus the precomputed layouts used by the comb conditions.
#[derive(Clone, Debug)]
pub struct LevelSystem {
    pub bl: BratteliDiagram,
    pub br: BratteliDiagram,
    pub d: usize,
    /// `levels[k]`: layout of level-`k` coefficients (`k = 0..=depth`).
    pub levels: Vec<Layout>,
    /// `mixed[k]`: layout `(L level k-1, R level k)` of the level-`k` condition, `k ≥ 1`.
    pub mixed: Vec<Layout>,
    maps_l: PathMaps,
    maps_r: PathMaps,
    dims_r: Vec<Vec<f64>>,
}

pub type LevelCoeffs<T> = Vec<Vec<T>>;

impl LevelSystem {
    pub fn new(bl: BratteliDiagram, br: BratteliDiagram) -> Self {
        assert_eq!(bl.depth(), br.depth());
        assert_eq!(bl.d(), br.d());
        let depth = bl.depth();
        let levels = (0..=depth).map(|k| Layout::new(&bl, k, &br, k)).collect();
        let mut mixed = vec![Layout::new(&bl, 0, &br, 0)];
        for k in 1..=depth {
            mixed.push(Layout::new(&bl, k - 1, &br, k));
        }
        let dims_r = br.levels.iter().map(|lv| lv.iter().map(|l| weyl_dim(l) as f64).collect()).collect();
        let maps_l = PathMaps::new(&bl);
        let maps_r = PathMaps::new(&br);
        Self { d: bl.d(), bl, br, levels, mixed, maps_l, maps_r, dims_r }
    }

    pub fn depth(&self) -> usize {
        self.bl.depth()
    }

    pub fn top(&self) -> &Layout {
        &self.levels[self.depth()]
    }

    /// `c^{k-1} = (1/d) Tr_{last L leg, last R leg} c^k`.
    pub fn trace_down<T: Coef>(&self, k: usize, ck: &LevelCoeffs<T>) -> LevelCoeffs<T> {
        let lo = &self.levels[k - 1];
        let hi = &self.levels[k];
        let inv_d = 1.0 / self.d as f64;
        let mut out = lo.zeros::<T>();
        for (bid, blk) in lo.blocks.iter().enumerate() {
            let size = blk.size();
            let el = &self.maps_l.ext[k - 1][blk.left];
            let er = &self.maps_r.ext[k - 1][blk.right];
            for s in 0..blk.m_left {
                for q in 0..blk.m_right {
                    for s2 in 0..blk.m_left {
                        for q2 in 0..blk.m_right {
                            let dst = &mut out[bid][blk.index(s, q) * size + blk.index(s2, q2)];
                            for (&(lam, sp), &(lam2, s2p)) in el[s].iter().zip(&el[s2]) {
                                debug_assert_eq!(lam, lam2);
                                for (&(om, qp), &(om2, q2p)) in er[q].iter().zip(&er[q2]) {
                                    debug_assert_eq!(om, om2);
                                    let hb = hi.block_id(lam, om);
                                    let h = &hi.blocks[hb];
                                    let src = &ck[hb][h.index(sp, qp) * h.size() + h.index(s2p, q2p)];
                                    dst.axpy(inv_d, src);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// All levels `c^depth, ..., c^0` from the top-level coefficients.
    pub fn all_levels<T: Coef>(&self, top: LevelCoeffs<T>) -> Vec<LevelCoeffs<T>> {
        let depth = self.depth();
        let mut out: Vec<LevelCoeffs<T>> = vec![Vec::new(); depth + 1];
        out[depth] = top;
        for k in (1..=depth).rev() {
            out[k - 1] = self.trace_down(k, &out[k]);
        }
        out
    }

    /// Coefficients of `Tr_{I_k} C_k` in the mixed layout of level `k`.
    pub fn condition_lhs<T: Coef>(&self, k: usize, ck: &LevelCoeffs<T>) -> LevelCoeffs<T> {
        let mx = &self.mixed[k];
        let hi = &self.levels[k];
        let mut out = mx.zeros::<T>();
        for (bid, blk) in mx.blocks.iter().enumerate() {
            let size = blk.size();
            let el = &self.maps_l.ext[k - 1][blk.left];
            for s in 0..blk.m_left {
                for s2 in 0..blk.m_left {
                    for (&(lam, sp), &(_, s2p)) in el[s].iter().zip(&el[s2]) {
                        let hb = hi.block_id(lam, blk.right);
                        let h = &hi.blocks[hb];
                        for q in 0..blk.m_right {
                            for q2 in 0..blk.m_right {
                                let src = &ck[hb][h.index(sp, q) * h.size() + h.index(s2p, q2)];
                                out[bid][blk.index(s, q) * size + blk.index(s2, q2)].axpy(1.0, src);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Coefficients of `C_{k-1} ⊗ 1_{O_{k-1}}` in the mixed layout of level `k`.
    pub fn condition_rhs<T: Coef>(&self, k: usize, ck1: &LevelCoeffs<T>) -> LevelCoeffs<T> {
        let mx = &self.mixed[k];
        let lo = &self.levels[k - 1];
        let mut out = mx.zeros::<T>();
        for (bid, blk) in mx.blocks.iter().enumerate() {
            let size = blk.size();
            let pr = &self.maps_r.par[k][blk.right];
            let d_om = self.dims_r[k][blk.right];
            for q in 0..blk.m_right {
                for q2 in 0..blk.m_right {
                    let (th, r) = pr[q];
                    let (th2, r2) = pr[q2];
                    if th != th2 {
                        continue;
                    }
                    let ratio = d_om / self.dims_r[k - 1][th];
                    let lb = lo.block_id(blk.left, th);
                    let l = &lo.blocks[lb];
                    for s in 0..blk.m_left {
                        for s2 in 0..blk.m_left {
                            let src = &ck1[lb][l.index(s, r) * l.size() + l.index(s2, r2)];
                            out[bid][blk.index(s, q) * size + blk.index(s2, q2)].axpy(ratio, src);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Largest violation of the reduced comb conditions by numeric top-level blocks.
pub fn comb_condition_residual<T: Coef + Into<Complex64>>(sys: &LevelSystem, top: LevelCoeffs<T>) -> f64 {
    let all = sys.all_levels(top);
    let mut worst = (all[0][0][0].clone().into() - Complex64::new(1.0, 0.0)).norm();
    for k in 1..=sys.depth() {
        let lhs = sys.condition_lhs(k, &all[k]);
        let rhs = sys.condition_rhs(k, &all[k - 1]);
        for (a, b) in lhs.iter().zip(&rhs) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x.clone().into() - y.clone().into()).norm());
            }
        }
    }
    worst
}
