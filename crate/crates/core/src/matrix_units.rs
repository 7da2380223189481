//! Concrete real orthogonal models of U(d) irreps, per-edge Clebsch-Gordan
//! isometries, path isometries into the tensor space, and matrix units.
//!
//! Every model is obtained as a Casimir eigenspace inside `parent ⊗ C^d`.
//! The generators `E_ab` of the defining leg and `-E_ba` of the conjugate leg
//! are real, so all models, isometries and matrix units here are real.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{CombError, Result};
use crate::linalg::{leg_permutation_map, max_abs, sym_eigen, RMat};
use crate::rep_theory::{branch, weyl_dim, BratteliDiagram, IrrepLabel, LegKind, Path};

const EIG_GROUP_TOL: f64 = 1e-6;
const CONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct IrrepModel {
    pub label: IrrepLabel,
    pub dim: usize,
    d: usize,
    /// `generators[a * d + b]` represents `E_ab`.
    generators: Vec<RMat>,
}

impl IrrepModel {
    pub fn trivial(d: usize) -> Self {
        Self {
            label: IrrepLabel::trivial(d),
            dim: 1,
            d,
            generators: vec![RMat::zeros(1, 1); d * d],
        }
    }

    pub fn generator(&self, a: usize, b: usize) -> &RMat {
        &self.generators[a * self.d + b]
    }

    /// Largest entry of `[E_ab, E_ce] - (δ_bc E_ae - δ_ea E_cb)` over all index choices.
    pub fn commutation_residual(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0_f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let x = self.generator(a, b);
                        let y = self.generator(c, e);
                        let mut r = x * y - y * x;
                        if b == c {
                            r -= self.generator(a, e);
                        }
                        if e == a {
                            r += self.generator(c, b);
                        }
                        worst = worst.max(max_abs(&r));
                    }
                }
            }
        }
        worst
    }

    pub fn casimir_residual(&self) -> f64 {
        let d = self.d;
        let mut cas = RMat::zeros(self.dim, self.dim);
        for a in 0..d {
            for b in 0..d {
                cas += self.generator(a, b) * self.generator(b, a);
            }
        }
        let target = RMat::identity(self.dim, self.dim) * self.label.casimir();
        max_abs(&(cas - target))
    }

    /// Checks that the Cartan elements are diagonal with integer weights summing to `|λ|`.
    pub fn cartan_residual(&self) -> f64 {
        let total: i64 = self.label.weights().iter().sum();
        let mut worst = 0.0_f64;
        let mut sums = vec![0.0; self.dim];
        for a in 0..self.d {
            let h = self.generator(a, a);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    if i != j {
                        worst = worst.max(h[(i, j)].abs());
                    }
                }
                let w = h[(i, i)];
                worst = worst.max((w - w.round()).abs());
                sums[i] += w;
            }
        }
        for s in sums {
            worst = worst.max((s - total as f64).abs());
        }
        worst
    }
}

/// Matrix of the leg generator `g_ab`: `E_ab` for a defining leg, `-E_ba` for a conjugate one.
pub fn leg_generator(d: usize, leg: LegKind, a: usize, b: usize) -> RMat {
    let mut g = RMat::zeros(d, d);
    match leg {
        LegKind::Defining => g[(a, b)] = 1.0,
        LegKind::ConjDefining => g[(b, a)] = -1.0,
    }
    g
}

#[derive(Clone, Debug)]
pub struct EdgeIsometry {
    pub parent: IrrepLabel,
    pub leg: LegKind,
    pub child: IrrepLabel,
    /// `(d_parent * d) × d_child`, rows indexed by `p * d + j`.
    pub gamma: RMat,
}

impl EdgeIsometry {
    /// Rows of `gamma` whose leg index equals `j`, as a `d_parent × d_child` block.
    pub fn leg_slice(&self, d: usize, j: usize) -> RMat {
        let dp = self.gamma.nrows() / d;
        RMat::from_fn(dp, self.gamma.ncols(), |p, c| self.gamma[(p * d + j, c)])
    }
}

type EdgeKey = (IrrepLabel, LegKind, IrrepLabel);

/// Registry of fixed irrep models and edge isometries, keyed by label.
///
/// The first construction of a label fixes its model; every later edge into
/// that label is expressed in the same model, which is what makes the
/// products `U_T U_T'^T` form a matrix-unit system across all paths.
#[derive(Clone, Debug)]
pub struct ModelRegistry {
    d: usize,
    models: BTreeMap<IrrepLabel, Arc<IrrepModel>>,
    edges: HashMap<EdgeKey, Arc<EdgeIsometry>>,
    spectra: HashMap<(IrrepLabel, LegKind), Arc<(DVector<f64>, RMat)>>,
}

impl ModelRegistry {
    pub fn new(d: usize) -> Self {
        let mut models = BTreeMap::new();
        models.insert(IrrepLabel::trivial(d), Arc::new(IrrepModel::trivial(d)));
        Self { d, models, edges: HashMap::new(), spectra: HashMap::new() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn model(&self, label: &IrrepLabel) -> Option<Arc<IrrepModel>> {
        self.models.get(label).cloned()
    }

    pub fn models(&self) -> impl Iterator<Item = &Arc<IrrepModel>> {
        self.models.values()
    }

    pub fn edge(&self, parent: &IrrepLabel, leg: LegKind, child: &IrrepLabel) -> Option<Arc<EdgeIsometry>> {
        self.edges.get(&(parent.clone(), leg, child.clone())).cloned()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Registers every edge of a diagram, level by level.
    pub fn register_diagram(&mut self, b: &BratteliDiagram) -> Result<()> {
        for (k, level_edges) in b.edges.iter().enumerate() {
            let leg = b.spec.legs[k];
            for &(p, c) in level_edges {
                self.get_or_create(b.label(k, p), leg, b.label(k + 1, c))?;
            }
        }
        Ok(())
    }

    /// Edge isometry `parent ⊗ leg → child` together with the child's fixed model.
    pub fn get_or_create(
        &mut self,
        parent: &IrrepLabel,
        leg: LegKind,
        child: &IrrepLabel,
    ) -> Result<(Arc<EdgeIsometry>, Arc<IrrepModel>)> {
        let key = (parent.clone(), leg, child.clone());
        if let Some(e) = self.edges.get(&key) {
            return Ok((e.clone(), self.models[child].clone()));
        }
        let d = self.d;
        let pm = self
            .model(parent)
            .ok_or_else(|| CombError::Internal(format!("parent model {parent} not registered")))?;
        if !branch(parent, leg, d)?.contains(child) {
            return Err(CombError::InvalidArgument(format!("{child} is not a {leg:?} child of {parent}")));
        }
        let spectrum = self.spectrum(&pm, leg);
        let (vals, vecs) = (&spectrum.0, &spectrum.1);
        let target = (child.casimir() - parent.casimir() - d as f64) / 2.0;
        let cols: Vec<usize> = (0..vals.len()).filter(|&i| (vals[i] - target).abs() < EIG_GROUP_TOL).collect();
        let dc = weyl_dim(child) as usize;
        if cols.len() != dc {
            return Err(CombError::Internal(format!(
                "Casimir eigenspace for {child} in {parent} ⊗ {leg:?} has dimension {} instead of {dc}",
                cols.len()
            )));
        }
        let basis = vecs.select_columns(&cols);
        let compressed = compress_generators(&pm, leg, &basis);

        let (gamma, model) = match self.models.get(child) {
            None => {
                let (rot, order) = weight_basis(&compressed, d);
                let mut gamma = &basis * &rot;
                let mut signs = vec![1.0; dc];
                for (c, s) in signs.iter_mut().enumerate() {
                    *s = canonical_sign(gamma.column(c).iter().copied());
                    gamma.column_mut(c).scale_mut(*s);
                }
                let sign_mat = RMat::from_diagonal(&DVector::from_vec(signs));
                let change = &rot * &sign_mat;
                let generators = compressed.iter().map(|g| change.transpose() * g * &change).collect();
                let _ = order;
                let model = Arc::new(IrrepModel { label: child.clone(), dim: dc, d, generators });
                self.models.insert(child.clone(), model.clone());
                (gamma, model)
            }
            Some(existing) => {
                let y = intertwiner(&compressed, existing, d)?;
                let mut gamma = &basis * &y;
                let s = canonical_sign(gamma.column(0).iter().copied());
                gamma *= s;
                (gamma, existing.clone())
            }
        };

        let edge = Arc::new(EdgeIsometry { parent: parent.clone(), leg, child: child.clone(), gamma });
        let resid = intertwining_residual(&pm, &edge, &model, d);
        if resid > CONSTRUCTION_TOL {
            return Err(CombError::Internal(format!(
                "edge {parent} -> {child} fails the intertwiner check (residual {resid:.2e})"
            )));
        }
        self.edges.insert(key, edge.clone());
        Ok((edge, model))
    }

    fn spectrum(&mut self, pm: &IrrepModel, leg: LegKind) -> Arc<(DVector<f64>, RMat)> {
        let key = (pm.label.clone(), leg);
        if let Some(s) = self.spectra.get(&key) {
            return s.clone();
        }
        let s = Arc::new(sym_eigen(&cross_term(pm, leg, self.d)));
        self.spectra.insert(key, s.clone());
        s
    }
}

/// `sum_ab E^parent_ab ⊗ g_ba`, the only non-scalar part of the Casimir on `parent ⊗ C^d`.
fn cross_term(pm: &IrrepModel, leg: LegKind, d: usize) -> RMat {
    let dp = pm.dim;
    let mut m = RMat::zeros(dp * d, dp * d);
    for j in 0..d {
        for k in 0..d {
            let g = match leg {
                LegKind::Defining => pm.generator(k, j),
                LegKind::ConjDefining => pm.generator(j, k),
            };
            let sign = if leg == LegKind::Defining { 1.0 } else { -1.0 };
            for p in 0..dp {
                for q in 0..dp {
                    m[(p * d + j, q * d + k)] = sign * g[(p, q)];
                }
            }
        }
    }
    m
}

/// Action of `E^parent_ab ⊗ 1 + 1 ⊗ g_ab` on the columns of `v` (rows `p * d + j`).
fn apply_tensor_generator(pm: &IrrepModel, leg: LegKind, d: usize, a: usize, b: usize, v: &RMat) -> RMat {
    let dp = pm.dim;
    let cols = v.ncols();
    let mut out = RMat::zeros(dp * d, cols);
    let e = pm.generator(a, b);
    for j in 0..d {
        let slice = RMat::from_fn(dp, cols, |p, c| v[(p * d + j, c)]);
        let prod = e * slice;
        for p in 0..dp {
            for c in 0..cols {
                out[(p * d + j, c)] += prod[(p, c)];
            }
        }
    }
    let (dst, src, s) = match leg {
        LegKind::Defining => (a, b, 1.0),
        LegKind::ConjDefining => (b, a, -1.0),
    };
    for p in 0..dp {
        for c in 0..cols {
            out[(p * d + dst, c)] += s * v[(p * d + src, c)];
        }
    }
    out
}

fn compress_generators(pm: &IrrepModel, leg: LegKind, basis: &RMat) -> Vec<RMat> {
    let d = pm.d;
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let act = apply_tensor_generator(pm, leg, d, a, b, basis);
            out.push(basis.transpose() * act);
        }
    }
    out
}

fn cartan_weights(d: usize) -> Vec<f64> {
    (0..d).map(|a| (d - a) as f64 + 0.01 * ((a + 2) as f64).sqrt()).collect()
}

fn weighted_cartan(gens: &[RMat], d: usize) -> RMat {
    let w = cartan_weights(d);
    let n = gens[0].nrows();
    let mut h = RMat::zeros(n, n);
    for a in 0..d {
        h += &gens[a * d + a] * w[a];
    }
    h
}

/// Orthogonal change of basis that diagonalizes the Cartan subalgebra,
/// ordered from the highest weight downwards.
fn weight_basis(gens: &[RMat], d: usize) -> (RMat, Vec<f64>) {
    let (vals, vecs) = sym_eigen(&weighted_cartan(gens, d));
    let n = vals.len();
    let mut rot = RMat::zeros(n, n);
    let mut order = Vec::with_capacity(n);
    for k in 0..n {
        rot.set_column(k, &vecs.column(n - 1 - k));
        order.push(vals[n - 1 - k]);
    }
    (rot, order)
}

/// Sign that makes the first largest-magnitude entry positive.
fn canonical_sign(col: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = col.clone().fold(0.0_f64, |m, x| m.max(x.abs()));
    for x in col {
        if x.abs() >= m - 1e-9 {
            return if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    1.0
}

/// Orthogonal `Y` with `Y^T A_ab Y = B_ab`, where `A` is the freshly compressed
/// action and `B` the registered model. Built by matching the highest-weight
/// vectors and propagating with the simple lowering operators.
fn intertwiner(a_gens: &[RMat], model: &IrrepModel, d: usize) -> Result<RMat> {
    let n = model.dim;
    let (vals, vecs) = sym_eigen(&weighted_cartan(a_gens, d));
    if n > 1 && (vals[n - 1] - vals[n - 2]).abs() < 1e-6 {
        return Err(CombError::Internal("highest weight space is degenerate".into()));
    }
    let hw_a: DVector<f64> = vecs.column(n - 1).into_owned();
    let mut hw_b = DVector::zeros(n);
    hw_b[0] = 1.0;

    let mut qa: Vec<DVector<f64>> = vec![hw_a];
    let mut qb: Vec<DVector<f64>> = vec![hw_b];
    let mut head = 0;
    while head < qa.len() && qa.len() < n {
        for a in 0..d - 1 {
            let lower = (a + 1) * d + a;
            let mut vb = &model.generators[lower] * &qb[head];
            let mut va = &a_gens[lower] * &qa[head];
            for _ in 0..2 {
                for k in 0..qb.len() {
                    let c = qb[k].dot(&vb);
                    vb.axpy(-c, &qb[k], 1.0);
                    va.axpy(-c, &qa[k], 1.0);
                }
            }
            let norm = vb.norm();
            if norm > 1e-7 {
                qb.push(vb / norm);
                qa.push(va / norm);
                if qa.len() == n {
                    break;
                }
            }
        }
        head += 1;
    }
    if qa.len() != n {
        return Err(CombError::Internal(format!(
            "lowering operators spanned {} of {n} dimensions",
            qa.len()
        )));
    }
    let mut y = RMat::zeros(n, n);
    for k in 0..n {
        y += &qa[k] * qb[k].transpose();
    }
    let svd = y.clone().svd(true, true);
    let spread = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max((s - 1.0).abs()));
    if spread > 1e-6 {
        return Err(CombError::Internal(format!("intertwiner is not orthogonal (spread {spread:.2e})")));
    }
    Ok(svd.u.unwrap() * svd.v_t.unwrap())
}

/// `max |Γ^T Γ - 1|` and `max |Γ^T (E_ab ⊗ 1 + 1 ⊗ g_ab) Γ - E^child_ab|`.
pub fn intertwining_residual(pm: &IrrepModel, edge: &EdgeIsometry, child: &IrrepModel, d: usize) -> f64 {
    let g = &edge.gamma;
    let mut worst = max_abs(&(g.transpose() * g - RMat::identity(g.ncols(), g.ncols())));
    for a in 0..d {
        for b in 0..d {
            let act = apply_tensor_generator(pm, edge.leg, d, a, b, g);
            worst = worst.max(max_abs(&(g.transpose() * act - child.generator(a, b))));
        }
    }
    worst
}

/// Path isometries `U_T` for every path of a diagram, level by level.
#[derive(Clone, Debug)]
pub struct PathBasis {
    pub diagram: BratteliDiagram,
    isometries: Vec<Vec<Vec<Arc<RMat>>>>,
}

impl PathBasis {
    pub fn build(diagram: &BratteliDiagram, reg: &mut ModelRegistry) -> Result<Self> {
        reg.register_diagram(diagram)?;
        let d = diagram.d();
        let mut isometries = vec![vec![vec![Arc::new(RMat::identity(1, 1))]]];
        for k in 0..diagram.depth() {
            let leg = diagram.spec.legs[k];
            let mut level = Vec::with_capacity(diagram.levels[k + 1].len());
            for v in 0..diagram.levels[k + 1].len() {
                let paths = diagram.paths_at(k + 1, v);
                let mut mats = Vec::with_capacity(paths.len());
                for path in paths {
                    let parent = path.parent().unwrap();
                    let pv = parent.end();
                    let u_parent = &isometries[k][pv][diagram.path_position(&parent)];
                    let edge = reg
                        .edge(diagram.label(k, pv), leg, diagram.label(k + 1, v))
                        .expect("diagram edges were registered");
                    mats.push(Arc::new(extend_isometry(u_parent, &edge, d)));
                }
                level.push(mats);
            }
            isometries.push(level);
        }
        Ok(Self { diagram: diagram.clone(), isometries })
    }

    pub fn isometry(&self, path: &Path) -> Arc<RMat> {
        self.isometries[path.len()][path.end()][self.diagram.path_position(path)].clone()
    }

    /// Isometries of all paths ending at vertex `v` of `level`, in path order.
    pub fn isometries_at(&self, level: usize, v: usize) -> &[Arc<RMat>] {
        &self.isometries[level][v]
    }

    pub fn matrix_unit(&self, bra: &Path, ket: &Path) -> Result<MatrixUnit> {
        if bra.len() != ket.len() || bra.end() != ket.end() {
            return Err(CombError::InvalidArgument("matrix unit paths must share their endpoint".into()));
        }
        Ok(MatrixUnit {
            label: self.diagram.label(bra.len(), bra.end()).clone(),
            bra: self.isometry(bra),
            ket: self.isometry(ket),
        })
    }
}

/// `(U_T ⊗ 1_d) Γ`, with the new leg as the least significant tensor factor.
pub fn extend_isometry(u: &RMat, edge: &EdgeIsometry, d: usize) -> RMat {
    let rows = u.nrows();
    let dc = edge.gamma.ncols();
    let mut out = RMat::zeros(rows * d, dc);
    for j in 0..d {
        let prod = u * edge.leg_slice(d, j);
        for x in 0..rows {
            for c in 0..dc {
                out[(x * d + j, c)] = prod[(x, c)];
            }
        }
    }
    out
}

/// `E^λ_{T,T'} = U_T U_T'^T`, kept as the isometry pair until materialized.
#[derive(Clone, Debug)]
pub struct MatrixUnit {
    pub label: IrrepLabel,
    pub bra: Arc<RMat>,
    pub ket: Arc<RMat>,
}

impl MatrixUnit {
    pub fn materialize(&self) -> RMat {
        &*self.bra * self.ket.transpose()
    }

    pub fn trace(&self) -> f64 {
        self.bra.iter().zip(self.ket.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Rows of `u` reordered so that `out[x] = u[map[x]]`, i.e. `ψ^{-1} U` for the leg permutation `ψ`.
pub fn permute_rows_inverse(u: &RMat, map: &[usize]) -> RMat {
    RMat::from_fn(u.nrows(), u.ncols(), |x, c| u[(map[x], c)])
}

/// `Tr(ψ E ψ^{-1} Ẽ)` evaluated through the isometry factors. `target[j]` is
/// the position leg `j` is moved to by `ψ`.
pub fn pairing_trace(e: &MatrixUnit, et: &MatrixUnit, target: &[usize], d: usize) -> Result<f64> {
    if e.bra.nrows() != et.bra.nrows() || d.pow(target.len() as u32) != e.bra.nrows() {
        return Err(CombError::DimensionMismatch("pairing_trace operands differ in size".into()));
    }
    let map = leg_permutation_map(d, target);
    let q = permute_rows_inverse(&et.bra, &map);
    let qp = permute_rows_inverse(&et.ket, &map);
    let p1 = e.ket.transpose() * q;
    let p2 = qp.transpose() * &*e.bra;
    Ok((p1 * p2).trace())
}
