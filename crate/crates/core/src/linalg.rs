//! Symmetric-matrix helpers shared by the Gaussian transport map.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues below this are clamped when taking matrix powers of SPD inputs.
pub const MIN_EIGENVALUE: f64 = 1e-12;

/// Force exact symmetry: `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spd_power(m: &DMatrix<f64>, exponent: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(m.nrows(), m.ncols()));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let clamped = lambda.max(MIN_EIGENVALUE);
        let factor = clamped.powf(exponent);
        if !factor.is_finite() {
            return Err(Error::SolverFailure(format!(
                "eigenvalue {lambda} cannot be raised to power {exponent}"
            )));
        }
        scaled.column_mut(j).scale_mut(factor);
    }
    Ok(symmetrize(&(scaled * eig.eigenvectors.transpose())))
}

/// Principal square root of a symmetric positive (semi)definite matrix.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_power(m, 0.5)
}

/// Inverse square root, with eigenvalues clamped at [`MIN_EIGENVALUE`].
pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_power(m, -0.5)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Relative Frobenius distance `|a - b|_F / max(|b|_F, floor)`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = StdRng::seed_from_u64(41);
        for n in 1..=9 {
            let s = random_spd(&mut rng, n);
            let root = spd_sqrt(&s).unwrap();
            let back = &root * &root;
            assert!(relative_frobenius(&back, &s) < 1e-10, "n = {n}");
            // Principal root: symmetric positive definite.
            assert!((root.clone() - root.transpose()).norm() < 1e-12);
            assert!(min_symmetric_eigenvalue(&root) > 0.0);
        }
    }

    #[test]
    fn inv_sqrt_inverts() {
        let mut rng = StdRng::seed_from_u64(43);
        for n in 1..=6 {
            let s = random_spd(&mut rng, n);
            let inv_root = spd_inv_sqrt(&s).unwrap();
            let prod = &inv_root * &s * &inv_root;
            let eye = DMatrix::identity(n, n);
            assert!(relative_frobenius(&prod, &eye) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn near_singular_is_clamped() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let inv_root = spd_inv_sqrt(&s).unwrap();
        assert!(inv_root.iter().all(|v| v.is_finite()));
    }
}
