//! Haar-random unitaries and isometries from QR of complex Ginibre matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::CMat;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// Haar-distributed `rows × cols` isometry (`cols ≤ rows`).
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    assert!(cols <= rows, "an isometry needs cols <= rows");
    if cols == 0 {
        return CMat::zeros(rows, 0);
    }
    let qr = ginibre(rows, cols, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    haar_isometry(d, d, rng)
}

/// Real Haar-like isometry (QR of a real Gaussian matrix, signs fixed).
pub fn haar_real_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::isometry_residual_c;

    #[test]
    fn unitarity_and_determinism() {
        let mut rng = seeded_rng(7);
        for d in 1..6 {
            let u = haar_unitary(d, &mut rng);
            assert!(isometry_residual_c(&u) < 1e-12);
            assert!(isometry_residual_c(&u.adjoint()) < 1e-12);
        }
        let a = haar_unitary(3, &mut seeded_rng(1));
        let b = haar_unitary(3, &mut seeded_rng(1));
        assert_eq!(a, b);
    }

    #[test]
    fn first_moment_vanishes() {
        // E[U_00] = 0 and E[|U_00|^2] = 1/d for Haar U.
        let mut rng = seeded_rng(11);
        let d = 3;
        let n = 20000;
        let (mut m1, mut m2) = (Complex64::new(0.0, 0.0), 0.0);
        for _ in 0..n {
            let u = haar_unitary(d, &mut rng);
            m1 += u[(0, 0)];
            m2 += u[(0, 0)].norm_sqr();
        }
        assert!((m1 / n as f64).norm() < 0.02);
        assert!((m2 / n as f64 - 1.0 / d as f64).abs() < 0.01);
    }
}
