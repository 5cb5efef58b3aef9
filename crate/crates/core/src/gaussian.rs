//! Gaussian optimal transport between two composition samples.
//!
//! Both samples are pushed through a log-ratio isomorphism, fitted with
//! empirical means and covariances, and mapped by the closed-form linear
//! optimal map `z ↦ m₁ + A(z − m₀)` where `A S₀ A = S₁`. Results are mapped
//! back to the simplex through the inverse isomorphism.

use crate::error::{Error, Result};
use crate::linalg::{
    min_symmetric_eigenvalue, relative_frobenius, spd_inv_sqrt, spd_sqrt, symmetrize,
};
use crate::logratio::{alr, alr_inv, ilr, ilr_basis, ilr_inv, LogRatioTransform, TransformKind};
use crate::simplex::{Composition, CompositionSample};
use nalgebra::{DMatrix, DVector};

/// Ridge factor applied to covariances before inversion:
/// `S += RIDGE * tr(S)/(d-1) * I`.
const RIDGE: f64 = 1e-8;

/// Fitted linear optimal map in log-ratio coordinates.
///
/// `clr` is accepted as a coordinate choice but is internally routed through
/// the orthonormal contrast basis so the covariance stays full rank; the
/// resulting map is the same as `ilr` up to the change of basis.
#[derive(Debug, Clone)]
pub struct GaussianTransportMap {
    transform: LogRatioTransform,
    coord_basis: Option<DMatrix<f64>>,
    m0: DVector<f64>,
    m1: DVector<f64>,
    s0: DMatrix<f64>,
    s1: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl GaussianTransportMap {
    /// Fits means, covariances and the transport matrix from two samples.
    ///
    /// Requires `n ≥ d` points per group; covariances use the unbiased
    /// `1/(n-1)` normalization plus a small ridge before inversion.
    pub fn fit(
        source: &CompositionSample,
        target: &CompositionSample,
        kind: TransformKind,
    ) -> Result<Self> {
        let d = source.dim();
        if target.dim() != d {
            return Err(Error::DimensionMismatch(d, target.dim()));
        }
        for sample in [source, target] {
            if sample.len() < d {
                return Err(Error::DegenerateInput(format!(
                    "group {} has {} points but d = {d}; need at least d points",
                    sample.group_label(),
                    sample.len()
                )));
            }
        }

        let transform = LogRatioTransform::new(kind, d)?;
        let coord_basis = match kind {
            TransformKind::Alr => None,
            TransformKind::Clr | TransformKind::Ilr => Some(ilr_basis(d)?),
        };

        let z0 = coords_of_sample(source, kind, coord_basis.as_ref())?;
        let z1 = coords_of_sample(target, kind, coord_basis.as_ref())?;

        let m0 = sample_mean(&z0);
        let m1 = sample_mean(&z1);
        let s0 = regularized_covariance(&z0, &m0);
        let s1 = regularized_covariance(&z1, &m1);

        if min_symmetric_eigenvalue(&s0) <= 0.0 {
            return Err(Error::SingularCovariance {
                group: source.group_label().index() as u8,
            });
        }
        if min_symmetric_eigenvalue(&s1) <= 0.0 {
            return Err(Error::SingularCovariance {
                group: target.group_label().index() as u8,
            });
        }

        let s0_sqrt = spd_sqrt(&s0)?;
        let s0_inv_sqrt = spd_inv_sqrt(&s0)?;
        let middle = spd_sqrt(&symmetrize(&(&s0_sqrt * &s1 * &s0_sqrt)))?;
        let a = symmetrize(&(&s0_inv_sqrt * middle * &s0_inv_sqrt));

        Ok(Self {
            transform,
            coord_basis,
            m0,
            m1,
            s0,
            s1,
            a,
        })
    }

    pub fn transform(&self) -> &LogRatioTransform {
        &self.transform
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn mean_source(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn mean_target(&self) -> &DVector<f64> {
        &self.m1
    }

    pub fn cov_source(&self) -> &DMatrix<f64> {
        &self.s0
    }

    pub fn cov_target(&self) -> &DMatrix<f64> {
        &self.s1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Relative Frobenius residual of the defining equation `A S₀ A = S₁`.
    pub fn residual(&self) -> f64 {
        relative_frobenius(&symmetrize(&(&self.a * &self.s0 * &self.a)), &self.s1)
    }

    /// Forward coordinates used by the fitted map (always full rank).
    pub fn coords(&self, x: &Composition) -> Result<DVector<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), x.dim()));
        }
        let z = match self.transform.kind() {
            TransformKind::Alr => alr(x),
            TransformKind::Clr | TransformKind::Ilr => ilr(x, self.coord_basis.as_ref().unwrap())?,
        };
        Ok(DVector::from_vec(z))
    }

    fn composition_from(&self, z: &DVector<f64>) -> Result<Composition> {
        match self.transform.kind() {
            TransformKind::Alr => alr_inv(z.as_slice()),
            TransformKind::Clr | TransformKind::Ilr => {
                ilr_inv(z.as_slice(), self.coord_basis.as_ref().unwrap())
            }
        }
    }

    /// Transports one composition: `h⁻¹(m₁ + A(h(x) − m₀))`.
    pub fn apply(&self, x: &Composition) -> Result<Composition> {
        let z = self.coords(x)?;
        let moved = &self.m1 + &self.a * (z - &self.m0);
        self.composition_from(&moved)
    }

    /// Pointwise displacement interpolation `h⁻¹((1−t) h(x) + t T(h(x)))`.
    pub fn interpolate(&self, x: &Composition, t: f64) -> Result<Composition> {
        check_time(t)?;
        let z = self.coords(x)?;
        let moved = &self.m1 + &self.a * (&z - &self.m0);
        let mixed = &z * (1.0 - t) + moved * t;
        self.composition_from(&mixed)
    }

    /// Law-level interpolation `(μ_t, Σ_t)` of the two fitted Gaussians.
    ///
    /// `Σ_t = B S₀ B` with `B = (1−t) I + t A`, which expands to the sandwich
    /// form `S₀^{-1/2}((1−t)S₀ + t(S₀^{1/2}S₁S₀^{1/2})^{1/2})² S₀^{-1/2}`.
    pub fn interpolated_law(&self, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        check_time(t)?;
        let mu = &self.m0 * (1.0 - t) + &self.m1 * t;
        let n = self.a.nrows();
        let b = DMatrix::identity(n, n) * (1.0 - t) + &self.a * t;
        let sigma = symmetrize(&(&b * &self.s0 * &b));
        Ok((mu, sigma))
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "interpolation time must lie in [0, 1], got {t}"
        )));
    }
    Ok(())
}

fn coords_of_sample(
    sample: &CompositionSample,
    kind: TransformKind,
    basis: Option<&DMatrix<f64>>,
) -> Result<Vec<DVector<f64>>> {
    sample
        .points()
        .iter()
        .map(|x| {
            let z = match kind {
                TransformKind::Alr => alr(x),
                TransformKind::Clr | TransformKind::Ilr => ilr(x, basis.unwrap())?,
            };
            Ok(DVector::from_vec(z))
        })
        .collect()
}

fn sample_mean(points: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(points[0].len());
    for p in points {
        acc += p;
    }
    acc / points.len() as f64
}

fn regularized_covariance(points: &[DVector<f64>], mean: &DVector<f64>) -> DMatrix<f64> {
    let k = points[0].len();
    let mut cov = DMatrix::zeros(k, k);
    for p in points {
        let c = p - mean;
        cov += &c * c.transpose();
    }
    cov /= (points.len() - 1) as f64;
    let ridge = RIDGE * cov.trace() / k as f64;
    cov + DMatrix::identity(k, k) * ridge
}
