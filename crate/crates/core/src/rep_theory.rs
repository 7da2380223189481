//! Highest weights of U(d), the Pieri branching rule for defining and
//! conjugate legs, and leveled Bratteli diagrams with their path bases.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CombError, Result};

/// A highest weight of U(d): a weakly decreasing integer vector.
///
/// Labels order with larger weights first (reverse lexicographic), so the
/// single-row shape `(n, 0, ..)` precedes every other label with `n` boxes.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrrepLabel {
    weights: Vec<i64>,
}

impl IrrepLabel {
    pub fn new(weights: Vec<i64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CombError::InvalidLabel("empty weight vector".into()));
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(CombError::InvalidLabel(format!(
                "weights {weights:?} are not weakly decreasing"
            )));
        }
        Ok(Self { weights })
    }

    pub fn trivial(d: usize) -> Self {
        Self { weights: vec![0; d] }
    }

    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    /// Eigenvalue of the quadratic Casimir `sum_ab E_ab E_ba`.
    pub fn casimir(&self) -> f64 {
        let d = self.d() as i64;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, &l)| (l * (l + d + 1 - 2 * (i as i64 + 1))) as f64)
            .sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.weights.iter().all(|&w| w == 0)
    }
}

impl Ord for IrrepLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        other.weights.cmp(&self.weights)
    }
}

impl PartialOrd for IrrepLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for IrrepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for IrrepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.weights.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{w}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LegKind {
    Defining,
    ConjDefining,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub d: usize,
    pub legs: Vec<LegKind>,
}

impl ChainSpec {
    pub fn new(d: usize, legs: Vec<LegKind>) -> Result<Self> {
        if d < 2 {
            return Err(CombError::InvalidArgument(format!("d = {d} must be at least 2")));
        }
        if legs.is_empty() {
            return Err(CombError::InvalidArgument("a chain needs at least one leg".into()));
        }
        Ok(Self { d, legs })
    }
}

/// Which supermap task a comb is meant to implement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Transpose,
    Invert,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Transpose => "transpose",
            Task::Invert => "invert",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = CombError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transpose" | "transposition" | "t" => Ok(Task::Transpose),
            "invert" | "inversion" | "i" => Ok(Task::Invert),
            other => Err(CombError::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_dim(label: &IrrepLabel, d: usize) -> Result<()> {
    if label.d() != d {
        return Err(CombError::InvalidLabel(format!(
            "label {label} has length {} but d = {d}",
            label.d()
        )));
    }
    Ok(())
}

/// Pieri rule: every weight reachable from `label` by one leg of the given kind.
pub fn branch(label: &IrrepLabel, leg: LegKind, d: usize) -> Result<Vec<IrrepLabel>> {
    check_dim(label, d)?;
    let step = match leg {
        LegKind::Defining => 1,
        LegKind::ConjDefining => -1,
    };
    let mut out: Vec<IrrepLabel> = (0..d)
        .filter_map(|i| {
            let mut w = label.weights.clone();
            w[i] += step;
            IrrepLabel::new(w).ok()
        })
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// Dimension of the irrep, by the Weyl formula in exact integer arithmetic.
pub fn weyl_dim(label: &IrrepLabel) -> u64 {
    let w = &label.weights;
    let d = w.len();
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    for i in 0..d {
        for j in i + 1..d {
            num = num
                .checked_mul((w[i] - w[j]) as i128 + (j - i) as i128)
                .expect("Weyl numerator overflow");
            den = den.checked_mul((j - i) as i128).expect("Weyl denominator overflow");
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
    }
    debug_assert_eq!(den, 1);
    (num / den) as u64
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// A root-to-vertex walk, stored as the vertex index at every level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub vertices: Vec<usize>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() <= 1
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().expect("paths always contain the root")
    }

    pub fn parent(&self) -> Option<Path> {
        (self.vertices.len() > 1).then(|| Path {
            vertices: self.vertices[..self.vertices.len() - 1].to_vec(),
        })
    }

    pub fn extend(&self, v: usize) -> Path {
        let mut vertices = self.vertices.clone();
        vertices.push(v);
        Path { vertices }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BratteliDiagram {
    pub spec: ChainSpec,
    pub levels: Vec<Vec<IrrepLabel>>,
    /// `edges[k]` holds `(parent, child)` vertex indices from level `k` to `k + 1`.
    pub edges: Vec<Vec<(usize, usize)>>,
    paths: Vec<Vec<Vec<Path>>>,
}

impl BratteliDiagram {
    pub fn build(spec: &ChainSpec) -> Self {
        let d = spec.d;
        let mut levels = vec![vec![IrrepLabel::trivial(d)]];
        let mut edges = Vec::with_capacity(spec.legs.len());
        for &leg in &spec.legs {
            let prev = levels.last().unwrap();
            let mut children: Vec<IrrepLabel> = prev
                .iter()
                .flat_map(|l| branch(l, leg, d).expect("labels built with matching d"))
                .collect();
            children.sort();
            children.dedup();
            let index: BTreeMap<&IrrepLabel, usize> =
                children.iter().enumerate().map(|(i, l)| (l, i)).collect();
            let mut level_edges = Vec::new();
            for (pi, parent) in prev.iter().enumerate() {
                for c in branch(parent, leg, d).unwrap() {
                    level_edges.push((pi, index[&c]));
                }
            }
            level_edges.sort();
            edges.push(level_edges);
            levels.push(children);
        }
        let mut paths: Vec<Vec<Vec<Path>>> = vec![vec![vec![Path { vertices: vec![0] }]]];
        for k in 0..spec.legs.len() {
            let mut next = vec![Vec::new(); levels[k + 1].len()];
            for &(p, c) in &edges[k] {
                for path in &paths[k][p] {
                    next[c].push(path.extend(c));
                }
            }
            for list in &mut next {
                list.sort();
            }
            paths.push(next);
        }
        Self { spec: spec.clone(), levels, edges, paths }
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn depth(&self) -> usize {
        self.spec.legs.len()
    }

    pub fn label(&self, level: usize, v: usize) -> &IrrepLabel {
        &self.levels[level][v]
    }

    pub fn index_of(&self, level: usize, label: &IrrepLabel) -> Option<usize> {
        self.levels.get(level)?.iter().position(|l| l == label)
    }

    pub fn parents(&self, level: usize, v: usize) -> Vec<usize> {
        assert!(level >= 1);
        self.edges[level - 1].iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    pub fn children(&self, level: usize, v: usize) -> Vec<usize> {
        self.edges[level].iter().filter(|e| e.0 == v).map(|e| e.1).collect()
    }

    /// Paths from the root to vertex `v` of `level`.
    pub fn paths_at(&self, level: usize, v: usize) -> &[Path] {
        &self.paths[level][v]
    }

    /// Paths to a vertex of the last level, looked up by label.
    pub fn enumerate_paths(&self, label: &IrrepLabel) -> Result<&[Path]> {
        let top = self.depth();
        let v = self
            .index_of(top, label)
            .ok_or_else(|| CombError::InvalidLabel(format!("{label} is not in the last level")))?;
        Ok(self.paths_at(top, v))
    }

    /// Position of `path` within `paths_at(level, end)`.
    pub fn path_position(&self, path: &Path) -> usize {
        let level = path.len();
        self.paths[level][path.end()]
            .binary_search(path)
            .expect("path belongs to this diagram")
    }
}

/// The diagrams `(B_L, B_R)` for a task. `B_L` runs over the comb outputs
/// `I_1..I_n, F` and `B_R` over the comb inputs `P, O_1..O_n`.
pub fn chain_for_task(task: Task, d: usize, n: usize) -> Result<(BratteliDiagram, BratteliDiagram)> {
    if n == 0 {
        return Err(CombError::InvalidArgument("n must be at least 1".into()));
    }
    let (l, r) = task_legs(task, n);
    let bl = BratteliDiagram::build(&ChainSpec::new(d, l)?);
    let br = BratteliDiagram::build(&ChainSpec::new(d, r)?);
    Ok((bl, br))
}

pub fn task_legs(task: Task, n: usize) -> (Vec<LegKind>, Vec<LegKind>) {
    use LegKind::*;
    match task {
        Task::Transpose => {
            let mut l = vec![Defining; n];
            l.push(ConjDefining);
            let mut r = vec![ConjDefining];
            r.extend(std::iter::repeat_n(Defining, n));
            (l, r)
        }
        Task::Invert => (vec![Defining; n + 1], vec![Defining; n + 1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use LegKind::*;

    fn lab(w: &[i64]) -> IrrepLabel {
        IrrepLabel::new(w.to_vec()).unwrap()
    }

    #[test]
    fn pieri_examples() {
        assert_eq!(branch(&lab(&[1, 0]), Defining, 2).unwrap(), vec![lab(&[2, 0]), lab(&[1, 1])]);
        assert_eq!(branch(&lab(&[0, 0]), ConjDefining, 2).unwrap(), vec![lab(&[0, -1])]);
        assert_eq!(
            branch(&lab(&[2, 1, 0]), Defining, 3).unwrap(),
            vec![lab(&[3, 1, 0]), lab(&[2, 2, 0]), lab(&[2, 1, 1])]
        );
        assert!(branch(&lab(&[1, 0]), Defining, 3).is_err());
    }

    #[test]
    fn weyl_examples() {
        for d in 2..8 {
            let mut w = vec![0; d];
            assert_eq!(weyl_dim(&IrrepLabel::new(w.clone()).unwrap()), 1);
            w[0] = 1;
            assert_eq!(weyl_dim(&IrrepLabel::new(w).unwrap()), d as u64);
        }
        assert_eq!(weyl_dim(&lab(&[2, 0])), 3);
        assert_eq!(weyl_dim(&lab(&[1, 0, -1])), 8);
        assert_eq!(weyl_dim(&lab(&[4, 1, 0, 0, 0])), 224);
    }

    #[test]
    fn diagram_examples() {
        let b = BratteliDiagram::build(&ChainSpec::new(2, vec![Defining, Defining]).unwrap());
        assert_eq!(b.levels[1], vec![lab(&[1, 0])]);
        assert_eq!(b.levels[2], vec![lab(&[2, 0]), lab(&[1, 1])]);
        let b = BratteliDiagram::build(&ChainSpec::new(3, vec![ConjDefining, Defining]).unwrap());
        assert_eq!(b.levels[1], vec![lab(&[0, 0, -1])]);
        assert_eq!(b.levels[2], vec![lab(&[1, 0, -1]), lab(&[0, 0, 0])]);
        let b = BratteliDiagram::build(&ChainSpec::new(2, vec![Defining; 4]).unwrap());
        assert_eq!(b.levels[4], vec![lab(&[4, 0]), lab(&[3, 1]), lab(&[2, 2])]);
    }

    #[test]
    fn path_counts_match_tableaux() {
        let b = BratteliDiagram::build(&ChainSpec::new(3, vec![Defining; 3]).unwrap());
        assert_eq!(b.enumerate_paths(&lab(&[2, 1, 0])).unwrap().len(), 2);
        assert_eq!(b.enumerate_paths(&lab(&[3, 0, 0])).unwrap().len(), 1);
        assert!(b.enumerate_paths(&lab(&[2, 0, 0])).is_err());
        let b = BratteliDiagram::build(&ChainSpec::new(4, vec![Defining; 4]).unwrap());
        assert_eq!(b.enumerate_paths(&lab(&[2, 2, 0, 0])).unwrap().len(), 2);
        assert_eq!(b.enumerate_paths(&lab(&[2, 1, 1, 0])).unwrap().len(), 3);
    }

    #[test]
    fn task_chains() {
        let (l, r) = chain_for_task(Task::Transpose, 2, 1).unwrap();
        assert_eq!(l.spec.legs, vec![Defining, ConjDefining]);
        assert_eq!(r.spec.legs, vec![ConjDefining, Defining]);
        let (l, r) = chain_for_task(Task::Invert, 2, 1).unwrap();
        assert_eq!(l.spec.legs, vec![Defining, Defining]);
        assert_eq!(r.spec.legs, l.spec.legs);
        let (l, r) = chain_for_task(Task::Transpose, 3, 2).unwrap();
        assert_eq!(l.levels[3], r.levels[3]);
    }

    #[test]
    fn casimir_of_defining() {
        // c(e_1) = 1 * (1 + d + 1 - 2) = d
        for d in 2..6 {
            let mut w = vec![0; d];
            w[0] = 1;
            assert_eq!(IrrepLabel::new(w).unwrap().casimir(), d as f64);
        }
    }
}
