//! Thin helpers over `nalgebra` for the dense complex algebra used by the
//! estimators and the beamformer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Eigenvectors are the matching columns.
pub fn hermitian_eigen_desc(m: CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a general square complex matrix.
pub fn eigenvalues(m: &CMatrix) -> Option<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    if m.nrows() == 1 {
        return Some(vec![m[(0, 0)]]);
    }
    m.eigenvalues().map(|v| v.iter().copied().collect())
}

/// Solves the Hermitian positive-definite system `a x = b`, falling back to
/// LU when the Cholesky factorization breaks down.
pub fn solve_hermitian(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(b));
    }
    a.clone().lu().solve(b)
}

/// Least-squares solution of `a x ≈ b` through the SVD pseudo-inverse.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, eps).expect("both factors were requested")
}

/// Sum of `z^k` for `k = 0..len` where `z = exp(j·theta)`.
pub(crate) fn geometric_phasor_sum(theta: f64, len: usize) -> Complex64 {
    if theta.abs() < 1e-3 {
        let step = Complex64::from_polar(1.0, theta);
        let mut acc = ZERO;
        let mut z = ONE;
        for _ in 0..len {
            acc += z;
            z *= step;
        }
        acc
    } else {
        let num = ONE - Complex64::from_polar(1.0, theta * len as f64);
        let den = ONE - Complex64::from_polar(1.0, theta);
        num / den
    }
}

/// Squared Euclidean norm.
pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
