//! Arithmetic and geometry of the open probability simplex.
//!
//! A [`Composition`] is a strictly positive vector of proportions summing to
//! one. The simplex carries a commutative group structure under the
//! perturbation operator (componentwise product followed by closure), an
//! inner product on log-ratios and the induced Aitchison distance.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default floor applied by [`closure`] to lift zero entries off the boundary.
///
/// Real encoders emit exact zeros; the floor keeps every log-ratio map finite
/// while perturbing sums by at most `d * EPSILON`.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Absolute tolerance on the unit-sum invariant after construction.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A point of the open simplex: strictly positive parts summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    parts: Vec<f64>,
}

impl Composition {
    /// Builds a composition from strictly positive parts, normalizing the sum.
    ///
    /// Errors with [`Error::InvalidDimension`] for fewer than 2 parts and
    /// [`Error::InvalidValue`] for non-finite or non-positive entries.
    pub fn new(parts: Vec<f64>) -> Result<Self> {
        if parts.len() < 2 {
            return Err(Error::InvalidDimension(parts.len()));
        }
        for (i, &p) in parts.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidValue(format!("part {i} is not finite: {p}")));
            }
            if p <= 0.0 {
                return Err(Error::InvalidValue(format!(
                    "part {i} is not strictly positive: {p}"
                )));
            }
        }
        let total: f64 = parts.iter().sum();
        let parts: Vec<f64> = parts.iter().map(|p| p / total).collect();
        debug_assert!((parts.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        Ok(Self { parts })
    }

    /// The identity element of the perturbation group: all parts `1/d`.
    pub fn uniform(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        Ok(Self {
            parts: vec![1.0 / d as f64; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<f64> {
        self.parts
    }

    /// Componentwise product followed by closure (the `⋄` group operation).
    pub fn perturb(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        let prod: Vec<f64> = self
            .parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| a * b)
            .collect();
        Self::new(prod)
    }

    /// Group inverse: closure of the componentwise reciprocals.
    pub fn inverse(&self) -> Self {
        let inv: Vec<f64> = self.parts.iter().map(|p| 1.0 / p).collect();
        Self::new(inv).expect("reciprocals of positive parts are positive")
    }

    /// Log-ratio inner product `(1/d) Σ_{i<j} log(x_i/x_j) log(y_i/y_j)`.
    pub fn aitchison_inner(&self, other: &Self) -> Result<f64> {
        check_dims(self, other)?;
        let d = self.dim();
        let lx: Vec<f64> = self.parts.iter().map(|p| p.ln()).collect();
        let ly: Vec<f64> = other.parts.iter().map(|p| p.ln()).collect();
        let mut acc = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                acc += (lx[i] - lx[j]) * (ly[i] - ly[j]);
            }
        }
        Ok(acc / d as f64)
    }

    /// Metric induced by the inner product: `sqrt(<x ⋄ y⁻¹, x ⋄ y⁻¹>)`.
    pub fn aitchison_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.perturb(&other.inverse())?;
        Ok(diff.aitchison_inner(&diff)?.max(0.0).sqrt())
    }
}

fn check_dims(x: &Composition, y: &Composition) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(())
}

/// Closure operator: lift zeros to `eps`, then normalize to unit sum.
///
/// Errors with [`Error::DegenerateInput`] when every entry is zero and
/// [`Error::InvalidValue`] on negative or non-finite entries.
pub fn closure_with_epsilon(raw: &[f64], eps: f64) -> Result<Composition> {
    if raw.len() < 2 {
        return Err(Error::InvalidDimension(raw.len()));
    }
    if eps.is_nan() || eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {eps}"
        )));
    }
    for (i, &r) in raw.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::InvalidValue(format!("entry {i} is not finite: {r}")));
        }
        if r < 0.0 {
            return Err(Error::InvalidValue(format!("entry {i} is negative: {r}")));
        }
    }
    if raw.iter().all(|&r| r == 0.0) {
        return Err(Error::DegenerateInput("all entries are zero".into()));
    }
    let lifted: Vec<f64> = raw.iter().map(|&r| if r < eps { eps } else { r }).collect();
    Composition::new(lifted)
}

/// [`closure_with_epsilon`] with the default floor [`DEFAULT_EPSILON`].
pub fn closure(raw: &[f64]) -> Result<Composition> {
    closure_with_epsilon(raw, DEFAULT_EPSILON)
}

/// Binary group tag for the two samples being transported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupLabel {
    Zero,
    One,
}

impl GroupLabel {
    pub fn flipped(self) -> Self {
        match self {
            GroupLabel::Zero => GroupLabel::One,
            GroupLabel::One => GroupLabel::Zero,
        }
    }

    pub fn index(self) -> usize {
        match self {
            GroupLabel::Zero => 0,
            GroupLabel::One => 1,
        }
    }
}

impl std::fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// A nonempty sample of compositions of equal dimension, tagged by group.
#[derive(Debug, Clone)]
pub struct CompositionSample {
    group_label: GroupLabel,
    points: Vec<Composition>,
}

impl CompositionSample {
    pub fn new(group_label: GroupLabel, points: Vec<Composition>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::DegenerateInput("empty sample".into()));
        };
        let d = first.dim();
        for p in &points {
            if p.dim() != d {
                return Err(Error::DimensionMismatch(d, p.dim()));
            }
        }
        Ok(Self {
            group_label,
            points,
        })
    }

    pub fn group_label(&self) -> GroupLabel {
        self.group_label
    }

    pub fn points(&self) -> &[Composition] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// Componentwise (Euclidean) mean of the sample, itself a composition.
    pub fn mean(&self) -> Composition {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        for p in &self.points {
            for (a, &v) in acc.iter_mut().zip(p.parts()) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        Composition::new(acc.iter().map(|a| a / n).collect())
            .expect("mean of compositions stays in the simplex")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_composition(rng: &mut impl Rng, d: usize) -> Composition {
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
        Composition::new(raw).unwrap()
    }

    #[test]
    fn closure_normalizes() {
        let c = closure(&[2.0, 6.0, 2.0]).unwrap();
        assert_eq!(c.parts(), &[0.2, 0.6, 0.2]);
        let u = closure(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(u.parts(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn closure_lifts_zeros_to_floor() {
        // Frozen from lift-then-normalize at 40-digit precision:
        // [1e-9, 1, 3] / (4 + 1e-9).
        let c = closure_with_epsilon(&[0.0, 1.0, 3.0], 1e-9).unwrap();
        assert_abs_diff_eq!(c.parts()[0], 2.499999999375e-10, epsilon = 1e-24);
        assert_abs_diff_eq!(c.parts()[1], 0.2499999999375, epsilon = 1e-15);
        assert_abs_diff_eq!(c.parts()[2], 0.7499999998125, epsilon = 1e-15);
    }

    #[test]
    fn closure_rejects_degenerate_and_negative() {
        assert!(matches!(
            closure(&[0.0, 0.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            closure(&[1.0, -0.5, 0.2]),
            Err(Error::InvalidValue(_))
        ));
        assert!(matches!(closure(&[1.0]), Err(Error::InvalidDimension(1))));
    }

    #[test]
    fn closure_is_idempotent() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..5.0)).collect();
            if raw.iter().all(|&r| r == 0.0) {
                continue;
            }
            let once = closure(&raw).unwrap();
            let twice = closure(once.parts()).unwrap();
            for (a, b) in once.parts().iter().zip(twice.parts()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn perturb_identity_and_inverse() {
        let x = Composition::new(vec![0.2, 0.3, 0.5]).unwrap();
        let u = Composition::uniform(3).unwrap();
        let xu = x.perturb(&u).unwrap();
        for (a, b) in xu.parts().iter().zip(x.parts()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }

        let x = Composition::new(vec![0.5, 0.25, 0.25]).unwrap();
        let id = x.perturb(&x.inverse()).unwrap();
        for p in id.parts() {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-15);
        }

        let x = Composition::new(vec![0.5, 0.5]).unwrap();
        let y = Composition::new(vec![0.8, 0.2]).unwrap();
        let xy = x.perturb(&y).unwrap();
        assert_abs_diff_eq!(xy.parts()[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(xy.parts()[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn perturb_dimension_mismatch() {
        let x = Composition::uniform(3).unwrap();
        let y = Composition::uniform(4).unwrap();
        assert!(matches!(x.perturb(&y), Err(Error::DimensionMismatch(3, 4))));
        assert!(matches!(
            x.aitchison_inner(&y),
            Err(Error::DimensionMismatch(3, 4))
        ));
        assert!(matches!(
            x.aitchison_distance(&y),
            Err(Error::DimensionMismatch(3, 4))
        ));
    }

    #[test]
    fn inverse_examples() {
        let x = Composition::new(vec![0.5, 0.25, 0.25]).unwrap();
        let inv = x.inverse();
        assert_abs_diff_eq!(inv.parts()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.parts()[1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.parts()[2], 0.4, epsilon = 1e-15);

        let u = Composition::uniform(5).unwrap();
        for p in u.inverse().parts() {
            assert_abs_diff_eq!(*p, 0.2, epsilon = 1e-15);
        }

        let x = Composition::new(vec![0.9, 0.1]).unwrap();
        let inv = x.inverse();
        assert_abs_diff_eq!(inv.parts()[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.parts()[1], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let mut rng = StdRng::seed_from_u64(11);
        let u = Composition::uniform(4).unwrap();
        for _ in 0..20 {
            let y = random_composition(&mut rng, 4);
            assert_abs_diff_eq!(u.aitchison_inner(&y).unwrap(), 0.0, epsilon = 1e-14);
        }

        // Norm positivity; zero only at the uniform composition.
        for _ in 0..100 {
            let x = random_composition(&mut rng, 3);
            let n = x.aitchison_inner(&x).unwrap();
            assert!(n >= 0.0);
        }
        assert_abs_diff_eq!(u.aitchison_inner(&u).unwrap(), 0.0, epsilon = 1e-15);

        // Hand value frozen from 40-digit evaluation: (1/3)(2 ln2^2).
        let x = Composition::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_abs_diff_eq!(
            x.aitchison_inner(&x).unwrap(),
            0.3203020092788009,
            epsilon = 1e-14
        );
    }

    #[test]
    fn distance_is_a_metric_empirically() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..100 {
            let x = random_composition(&mut rng, 4);
            let y = random_composition(&mut rng, 4);
            let z = random_composition(&mut rng, 4);
            let dxx = x.aitchison_distance(&x).unwrap();
            assert_abs_diff_eq!(dxx, 0.0, epsilon = 1e-12);
            let dxy = x.aitchison_distance(&y).unwrap();
            let dyx = y.aitchison_distance(&x).unwrap();
            assert_abs_diff_eq!(dxy, dyx, epsilon = 1e-12);
            let dxz = x.aitchison_distance(&z).unwrap();
            let dzy = z.aitchison_distance(&y).unwrap();
            assert!(dxy <= dxz + dzy + 1e-12);
        }
    }

    #[test]
    fn sample_validates_shape() {
        assert!(matches!(
            CompositionSample::new(GroupLabel::Zero, vec![]),
            Err(Error::DegenerateInput(_))
        ));
        let pts = vec![
            Composition::uniform(3).unwrap(),
            Composition::uniform(4).unwrap(),
        ];
        assert!(matches!(
            CompositionSample::new(GroupLabel::Zero, pts),
            Err(Error::DimensionMismatch(3, 4))
        ));
    }

    #[test]
    fn sample_mean_is_componentwise() {
        let pts = vec![
            Composition::new(vec![0.6, 0.2, 0.2]).unwrap(),
            Composition::new(vec![0.2, 0.6, 0.2]).unwrap(),
        ];
        let s = CompositionSample::new(GroupLabel::One, pts).unwrap();
        let m = s.mean();
        assert_abs_diff_eq!(m.parts()[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(m.parts()[1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(m.parts()[2], 0.2, epsilon = 1e-15);
        assert_eq!(s.group_label().flipped(), GroupLabel::Zero);
    }
}
