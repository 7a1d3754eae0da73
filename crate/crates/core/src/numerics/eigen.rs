use nalgebra::DMatrix;
use num_complex::Complex64;

/// Complex spectrum of a square matrix (unordered), via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    assert!(m.is_square(), "eigenvalues need a square matrix");
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}
