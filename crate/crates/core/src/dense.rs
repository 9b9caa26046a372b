//! Dense Hermitian eigendecomposition wrappers.
//!
//! Used by the small-sector ground-state fallback and by dense cross-checks
//! in the test suites. Eigenpairs come back sorted ascending.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn sort_pairs<T: nalgebra::ComplexField<RealField = f64>>(
    values: Vec<f64>,
    vectors: DMatrix<T>,
) -> (Vec<f64>, DMatrix<T>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let n = vectors.nrows();
    let mut sorted_vectors = DMatrix::zeros(n, values.len());
    for (dst, &src) in order.iter().enumerate() {
        sorted_vectors.set_column(dst, &vectors.column(src));
    }
    (sorted_values, sorted_vectors)
}

/// Full eigendecomposition of a Hermitian complex matrix.
pub fn hermitian_eigen(mat: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let se = mat.clone().symmetric_eigen();
    sort_pairs(se.eigenvalues.as_slice().to_vec(), se.eigenvectors)
}

/// Full eigendecomposition of a real symmetric matrix.
pub fn symmetric_eigen(mat: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = mat.clone().symmetric_eigen();
    sort_pairs(se.eigenvalues.as_slice().to_vec(), se.eigenvectors)
}

/// Lowest eigenpair of a Hermitian complex matrix.
pub fn lowest_eigenpair(mat: &DMatrix<Complex64>) -> (f64, Vec<Complex64>) {
    let (values, vectors) = hermitian_eigen(mat);
    (values[0], vectors.column(0).iter().copied().collect())
}

/// psi -> V exp(-i (L - shift) dt) V† psi for a precomputed eigensystem.
pub fn evolve_eigen(
    values: &[f64],
    vectors: &DMatrix<Complex64>,
    psi: &[Complex64],
    dt: f64,
    shift: f64,
) -> Vec<Complex64> {
    let v = DVector::from_column_slice(psi);
    let mut coeffs = vectors.adjoint() * v;
    for (i, c) in coeffs.iter_mut().enumerate() {
        let ang = -(values[i] - shift) * dt;
        *c *= Complex64::new(ang.cos(), ang.sin());
    }
    (vectors * coeffs).iter().copied().collect()
}
