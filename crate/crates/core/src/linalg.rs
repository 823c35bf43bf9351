//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `DMatrix<f64>`; the systems under study are tiny
//! (a handful of states), so clarity wins over blocked kernels.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(X + Xᵀ) / 2`.
pub fn symmetrize(x: &Mat) -> Mat {
    (x + x.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(x: &Mat) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest absolute entry of `X - Xᵀ`.
pub fn asymmetry(x: &Mat) -> f64 {
    max_abs(&(x - x.transpose()))
}

pub fn sym_eigenvalues(x: &Mat) -> Vector {
    SymmetricEigen::new(symmetrize(x)).eigenvalues
}

pub fn min_eigenvalue(x: &Mat) -> f64 {
    sym_eigenvalues(x).iter().copied().fold(f64::INFINITY, f64::min)
}

/// True when `X - Y ⪰ -slack·I`.
pub fn psd_geq(x: &Mat, y: &Mat, slack: f64) -> bool {
    min_eigenvalue(&(x - y)) >= -slack
}

/// Symmetric PSD square root through the eigendecomposition; eigenvalues
/// below `clamp_tol` in magnitude (or negative) are clamped to zero.
pub fn psd_sqrt(x: &Mat, clamp_tol: f64) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(x));
    let roots = eig.eigenvalues.map(|l| if l <= clamp_tol { 0.0 } else { l.sqrt() });
    let v = &eig.eigenvectors;
    symmetrize(&(v * Mat::from_diagonal(&roots) * v.transpose()))
}

/// Solves `M Z = rhs` for symmetric positive-definite `M`.
pub fn spd_solve(m: &Mat, rhs: &Mat) -> Option<Mat> {
    Cholesky::new(symmetrize(m)).map(|c| c.solve(rhs))
}

/// Moduli of the (possibly complex) eigenvalues of a square matrix.
pub fn eigen_moduli(a: &Mat) -> Vec<f64> {
    a.clone().complex_eigenvalues().iter().map(|z| z.norm()).collect()
}

pub fn spectral_radius(a: &Mat) -> f64 {
    eigen_moduli(a).into_iter().fold(0.0, f64::max)
}

/// Numerical rank with singular values below `rel_tol · σ_max` discarded.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Kalman controllability matrix `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        out.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// `(A, B)` controllable in the rank sense.
pub fn is_controllable(a: &Mat, b: &Mat, rel_tol: f64) -> bool {
    numerical_rank(&controllability_matrix(a, b), rel_tol) == a.nrows()
}

/// `(A, C)` observable, by duality with controllability of `(Aᵀ, Cᵀ)`.
pub fn is_observable(a: &Mat, c: &Mat, rel_tol: f64) -> bool {
    is_controllable(&a.transpose(), &c.transpose(), rel_tol)
}

pub fn trace_product(x: &Mat, y: &Mat) -> f64 {
    (x * y).trace()
}

pub fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}
