//! Dense Hermitian linear algebra on small matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::C64;

fn to_nalgebra(a: &Array2<C64>) -> DMatrix<C64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<C64>) -> Array2<C64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues of the Hermitian part of `a`, sorted increasingly.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    let m = to_nalgebra(a);
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// `f(A)` for Hermitian `A` via its spectral decomposition.
pub fn hermitian_function(a: &Array2<C64>, f: impl Fn(f64) -> f64) -> Array2<C64> {
    let m = to_nalgebra(a);
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(f(l), 0.0)));
    from_nalgebra(&(q * d * q.adjoint()))
}

/// `exp(-i theta A)` for Hermitian `A`.
pub fn hermitian_exp(a: &Array2<C64>, theta: f64) -> Array2<C64> {
    let m = to_nalgebra(a);
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -theta * l)));
    from_nalgebra(&(q * d * q.adjoint()))
}

/// Conjugate transpose.
pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_pauli_y() {
        let a = Array2::from_shape_vec((2, 2), vec![C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)])
            .unwrap();
        let ev = hermitian_eigenvalues(&a);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_square_root() {
        let a = Array2::from_shape_vec((2, 2), vec![C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)])
            .unwrap();
        let s = hermitian_function(&a, |l| l.powf(-0.5));
        let id = s.dot(&a).dot(&s);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - want).norm() < 1e-13);
            }
        }
    }
}
