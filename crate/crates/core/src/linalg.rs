//! Small dense linear-algebra helpers shared by the other modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Eigen-decomposition of a real symmetric matrix with eigenvalues sorted ascending.
pub fn sym_eigen(a: &RMat) -> (DVector<f64>, RMat) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), RMat::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = RMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigen-decomposition of a complex Hermitian matrix, eigenvalues ascending.
pub fn herm_eigen(a: &CMat) -> (DVector<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), CMat::zeros(0, 0));
    }
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eigenvalue_herm(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    herm_eigen(a).0[0]
}

pub fn min_eigenvalue_sym(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(a).0[0]
}

/// `f(A)` for a Hermitian `A`, applied to the eigenvalues.
pub fn herm_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = herm_eigen(a);
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let s = Complex64::new(f(*v), 0.0);
        for x in scaled.column_mut(j).iter_mut() {
            *x *= s;
        }
    }
    &scaled * vecs.adjoint()
}

/// Square root and support-restricted inverse square root of a PSD matrix.
/// Eigenvalues below `rel_tol * max` are treated as zero.
pub fn psd_sqrt_and_pinv_sqrt(a: &CMat, rel_tol: f64) -> (CMat, CMat) {
    let (vals, _) = herm_eigen(a);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * top.max(f64::MIN_POSITIVE);
    let sqrt = herm_fn(a, |x| if x > cut { x.sqrt() } else { 0.0 });
    let pinv = herm_fn(a, |x| if x > cut { 1.0 / x.sqrt() } else { 0.0 });
    (sqrt, pinv)
}

pub fn kron_c(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn frob_c(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &RMat) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Deviation of `Q^T Q` from the identity.
pub fn isometry_residual(q: &RMat) -> f64 {
    let g = q.transpose() * q;
    max_abs(&(g - RMat::identity(q.ncols(), q.ncols())))
}

pub fn isometry_residual_c(q: &CMat) -> f64 {
    let g = q.adjoint() * q;
    let id = CMat::identity(q.ncols(), q.ncols());
    (g - id).iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Moore-Penrose pseudo-inverse of a real symmetric matrix.
pub fn sym_pinv(a: &RMat, rel_tol: f64) -> RMat {
    let (vals, vecs) = sym_eigen(a);
    let top = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut d = RMat::zeros(a.nrows(), a.nrows());
    for (i, v) in vals.iter().enumerate() {
        if v.abs() > rel_tol * top {
            d[(i, i)] = 1.0 / v;
        }
    }
    &vecs * d * vecs.transpose()
}

/// Digits of `index` in base `d`, most significant first (leg 0 leftmost).
pub fn digits(mut index: usize, d: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for slot in out.iter_mut().rev() {
        *slot = index % d;
        index /= d;
    }
    out
}

pub fn from_digits(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &x| acc * d + x)
}

/// Basis-index map of the leg permutation that sends leg `j` to position `target[j]`.
pub fn leg_permutation_map(d: usize, target: &[usize]) -> Vec<usize> {
    let k = target.len();
    let total = d.pow(k as u32);
    let mut out = vec![0; total];
    let mut moved = vec![0; k];
    for (x, slot) in out.iter_mut().enumerate() {
        let xs = digits(x, d, k);
        for (j, &t) in target.iter().enumerate() {
            moved[t] = xs[j];
        }
        *slot = from_digits(&moved, d);
    }
    out
}
