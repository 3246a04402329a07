//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetric_part(m)).eigenvalues.min()
}

/// `V diag(max(λ, floor)^power) Vᵀ` for a symmetric matrix.
pub fn symmetric_power(m: &DMatrix<f64>, power: f64, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetric_part(m));
    let scaled = eig.eigenvalues.map(|l| l.max(floor).powf(power));
    &eig.eigenvectors * DMatrix::from_diagonal(&scaled) * eig.eigenvectors.transpose()
}

/// A factor `A` with `A Aᵀ = cov` for a PSD matrix (tiny negative eigenvalues clipped).
pub fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetric_part(cov));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// `θᵀ M θ`.
pub fn quad_form(m: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    theta.dot(&(m * theta))
}

pub fn is_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_square_root_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.25]));
        let r = symmetric_power(&m, -0.5, 1e-12);
        assert_relative_eq!(r[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r[(1, 1)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = psd_factor(&cov);
        assert_relative_eq!(&a * a.transpose(), cov, epsilon = 1e-12);
    }
}
