//! Small dense helpers on top of nalgebra: Lyapunov solves, spectra, symmetry.

use alloc::format;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

pub fn is_positive_definite(m: &Matrix) -> bool {
    m.nrows() > 0 && min_symmetric_eigenvalue(m) > 0.0
}

/// Largest real part over the spectrum of a square matrix.
pub fn spectral_abscissa(a: &Matrix) -> f64 {
    a.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_hurwitz(a: &Matrix) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::InvalidInput(format!("expected a nonempty square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let abscissa = spectral_abscissa(a);
    if !(abscissa < 0.0) {
        return Err(Error::NotStable { max_real_part: abscissa });
    }
    Ok(())
}

/// Column-major linear operator `P -> AᵀP + PA` acting on vec(P).
pub fn lyapunov_operator(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut op = Matrix::zeros(n * n, n * n);
    // vec(AᵀP) = (I ⊗ Aᵀ) vec(P), vec(PA) = (Aᵀ ⊗ I) vec(P)
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                // (AᵀP)_{ij} = Σ_k A_{ki} P_{kj}
                op[(row, k + j * n)] += a[(k, i)];
                // (PA)_{ij} = Σ_k P_{ik} A_{kj}
                op[(row, i + k * n)] += a[(k, j)];
            }
        }
    }
    op
}

/// Solves `AᵀP + PA = -Q` for `P`; `A` must be Hurwitz.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    check_hurwitz(a)?;
    let n = a.nrows();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::InvalidInput(format!("Q must be {n}x{n}, got {}x{}", q.nrows(), q.ncols())));
    }
    let op = lyapunov_operator(a);
    let rhs = Vector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = op.lu().solve(&rhs).ok_or_else(|| Error::InvalidInput("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&Matrix::from_column_slice(n, n, sol.as_slice())))
}

/// Frobenius-norm residual of `AᵀP + PA + Q`.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    (a.transpose() * p + p * a + q).norm()
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar() {
        let a = Matrix::from_element(1, 1, -1.0);
        let q = Matrix::from_element(1, 1, 2.0);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_nonsymmetric_a() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let q = Matrix::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert!(lyapunov_residual(&a, &p, &q) < 1e-12);
        assert!(is_positive_definite(&p));
    }

    #[test]
    fn unstable_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(check_hurwitz(&a), Err(Error::NotStable { .. })));
    }
}
