//! Log-ratio isomorphisms between the simplex and Euclidean coordinates.
//!
//! `alr` maps to `R^{d-1}` against the last part, `clr` maps to the zero-sum
//! hyperplane of `R^d`, and `ilr` composes `clr` with an orthonormal contrast
//! basis, giving an isometry onto `R^{d-1}`. All inverses are softmax-style
//! maps guarded against overflow by max-shifting.

use crate::error::{Error, Result};
use crate::simplex::{closure, Composition};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which log-ratio isomorphism to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Alr,
    Clr,
    Ilr,
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alr" => Ok(TransformKind::Alr),
            "clr" => Ok(TransformKind::Clr),
            "ilr" => Ok(TransformKind::Ilr),
            other => Err(Error::InvalidParameter(format!(
                "unknown transform {other:?}, expected alr, clr or ilr"
            ))),
        }
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TransformKind::Alr => "alr",
            TransformKind::Clr => "clr",
            TransformKind::Ilr => "ilr",
        };
        write!(f, "{s}")
    }
}

/// A log-ratio transform of fixed dimension; `ilr` carries its contrast basis.
#[derive(Debug, Clone)]
pub struct LogRatioTransform {
    kind: TransformKind,
    d: usize,
    basis: Option<DMatrix<f64>>,
}

impl LogRatioTransform {
    pub fn new(kind: TransformKind, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let basis = match kind {
            TransformKind::Ilr => Some(ilr_basis(d)?),
            _ => None,
        };
        Ok(Self { kind, d, basis })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Contrast basis (ilr only).
    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    /// Forward map; `alr`/`ilr` yield `d-1` coordinates, `clr` yields `d`.
    pub fn forward(&self, x: &Composition) -> Result<Vec<f64>> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch(self.d, x.dim()));
        }
        match self.kind {
            TransformKind::Alr => Ok(alr(x)),
            TransformKind::Clr => Ok(clr(x)),
            TransformKind::Ilr => ilr(x, self.basis.as_ref().unwrap()),
        }
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Composition> {
        match self.kind {
            TransformKind::Alr => {
                if z.len() != self.d - 1 {
                    return Err(Error::DimensionMismatch(self.d - 1, z.len()));
                }
                alr_inv(z)
            }
            TransformKind::Clr => {
                if z.len() != self.d {
                    return Err(Error::DimensionMismatch(self.d, z.len()));
                }
                clr_inv(z)
            }
            TransformKind::Ilr => ilr_inv(z, self.basis.as_ref().unwrap()),
        }
    }
}

/// Additive log-ratio: `log(x_i / x_d)` for `i = 1..d-1`.
pub fn alr(x: &Composition) -> Vec<f64> {
    let parts = x.parts();
    let last = parts[x.dim() - 1].ln();
    parts[..x.dim() - 1].iter().map(|p| p.ln() - last).collect()
}

/// Inverse alr: closure of `exp([z, 0])`, max-shifted against overflow.
pub fn alr_inv(z: &[f64]) -> Result<Composition> {
    for (i, &v) in z.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidValue(format!(
                "coordinate {i} is not finite: {v}"
            )));
        }
    }
    let shift = z.iter().copied().fold(0.0_f64, f64::max);
    let mut raw: Vec<f64> = z.iter().map(|v| (v - shift).exp()).collect();
    raw.push((-shift).exp());
    closure(&raw)
}

/// Centered log-ratio: `log(x_i / g(x))` with `g` the geometric mean.
pub fn clr(x: &Composition) -> Vec<f64> {
    let logs: Vec<f64> = x.parts().iter().map(|p| p.ln()).collect();
    let mean = logs.iter().sum::<f64>() / x.dim() as f64;
    logs.iter().map(|l| l - mean).collect()
}

/// Inverse clr: softmax, invariant to adding a constant to all coordinates.
pub fn clr_inv(z: &[f64]) -> Result<Composition> {
    if z.len() < 2 {
        return Err(Error::InvalidDimension(z.len()));
    }
    for (i, &v) in z.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidValue(format!(
                "coordinate {i} is not finite: {v}"
            )));
        }
    }
    let shift = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = z.iter().map(|v| (v - shift).exp()).collect();
    closure(&raw)
}

/// Orthonormal zero-sum contrast basis, `d x (d-1)`, Helmert construction.
///
/// Column `j` (0-based) contrasts the first `j+1` parts against part `j+2`,
/// so columns are ordered by increasing contrast size; signs are fixed with
/// the leading entries positive.
pub fn ilr_basis(d: usize) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let mut m = DMatrix::zeros(d, d - 1);
    for j in 0..d - 1 {
        let k = (j + 1) as f64;
        let a = 1.0 / (k * (k + 1.0)).sqrt();
        for i in 0..=j {
            m[(i, j)] = a;
        }
        m[(j + 1, j)] = -k * a;
    }
    Ok(m)
}

/// Isometric log-ratio: `clr(x)` projected on the contrast basis.
pub fn ilr(x: &Composition, basis: &DMatrix<f64>) -> Result<Vec<f64>> {
    if basis.nrows() != x.dim() {
        return Err(Error::DimensionMismatch(basis.nrows(), x.dim()));
    }
    let c = DVector::from_vec(clr(x));
    Ok((basis.transpose() * c).iter().copied().collect())
}

/// Inverse ilr: softmax of the basis expansion `M z`.
pub fn ilr_inv(z: &[f64], basis: &DMatrix<f64>) -> Result<Composition> {
    if basis.ncols() != z.len() {
        return Err(Error::DimensionMismatch(basis.ncols(), z.len()));
    }
    let zv = DVector::from_column_slice(z);
    let full = basis * zv;
    clr_inv(full.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_composition(rng: &mut impl Rng, d: usize) -> Composition {
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
        Composition::new(raw).unwrap()
    }

    #[test]
    fn alr_examples() {
        let u = Composition::uniform(3).unwrap();
        let z = alr(&u);
        assert_abs_diff_eq!(z[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 0.0, epsilon = 1e-15);

        // Frozen from 40-digit evaluation of [ln 0.4, ln 0.6].
        let x = Composition::new(vec![0.2, 0.3, 0.5]).unwrap();
        let z = alr(&x);
        assert_abs_diff_eq!(z[0], -0.9162907318741551, epsilon = 1e-14);
        assert_abs_diff_eq!(z[1], -0.5108256237659907, epsilon = 1e-14);
    }

    #[test]
    fn alr_round_trip() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = random_composition(&mut rng, 4);
            let back = alr_inv(&alr(&x)).unwrap();
            for (a, b) in x.parts().iter().zip(back.parts()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn alr_inv_examples() {
        let u = alr_inv(&[0.0, 0.0]).unwrap();
        for p in u.parts() {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-15);
        }

        let c = alr_inv(&[2f64.ln(), 2f64.ln()]).unwrap();
        assert_abs_diff_eq!(c.parts()[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(c.parts()[1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(c.parts()[2], 0.2, epsilon = 1e-15);

        // Large coordinates must not overflow thanks to the max-shift.
        let c = alr_inv(&[700.0, 0.0]).unwrap();
        assert!(c.parts().iter().all(|p| p.is_finite() && *p > 0.0));
        assert!(c.parts()[0] > 1.0 - 1e-6);
        assert!(matches!(
            alr_inv(&[f64::INFINITY, 0.0]),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn clr_examples() {
        let u = Composition::uniform(3).unwrap();
        for v in clr(&u) {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }

        // Frozen from 40-digit evaluation: [(2/3)ln2, -(1/3)ln2, -(1/3)ln2].
        let x = Composition::new(vec![0.5, 0.25, 0.25]).unwrap();
        let z = clr(&x);
        assert_abs_diff_eq!(z[0], 0.4620981203732969, epsilon = 1e-14);
        assert_abs_diff_eq!(z[1], -0.23104906018664845, epsilon = 1e-14);
        assert_abs_diff_eq!(z[2], -0.23104906018664845, epsilon = 1e-14);
    }

    #[test]
    fn clr_zero_sum_and_round_trip() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = random_composition(&mut rng, 5);
            let z = clr(&x);
            assert_abs_diff_eq!(z.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
            let back = clr_inv(&z).unwrap();
            for (a, b) in x.parts().iter().zip(back.parts()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn clr_inv_shift_invariance() {
        let u = clr_inv(&[0.0, 0.0, 0.0]).unwrap();
        for p in u.parts() {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-15);
        }

        let z = [0.3, -1.2, 0.9];
        let shifted: Vec<f64> = z.iter().map(|v| v + 5.0).collect();
        let a = clr_inv(&z).unwrap();
        let b = clr_inv(&shifted).unwrap();
        for (p, q) in a.parts().iter().zip(b.parts()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn basis_is_orthonormal_contrast() {
        assert!(matches!(ilr_basis(1), Err(Error::InvalidDimension(1))));

        let m = ilr_basis(2).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 0)], -1.0 / 2f64.sqrt(), epsilon = 1e-15);

        for d in 2..=10 {
            let m = ilr_basis(d).unwrap();
            let gram = m.transpose() * &m;
            for i in 0..d - 1 {
                for j in 0..d - 1 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(gram[(i, j)], want, epsilon = 1e-12);
                }
            }
            for j in 0..d - 1 {
                let col_sum: f64 = (0..d).map(|i| m[(i, j)]).sum();
                assert_abs_diff_eq!(col_sum, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ilr_isometry_and_round_trip() {
        let mut rng = StdRng::seed_from_u64(17);
        let basis = ilr_basis(4).unwrap();

        let u = Composition::uniform(4).unwrap();
        for v in ilr(&u, &basis).unwrap() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }

        for _ in 0..100 {
            let x = random_composition(&mut rng, 4);
            let y = random_composition(&mut rng, 4);
            let zx = ilr(&x, &basis).unwrap();
            let zy = ilr(&y, &basis).unwrap();
            let euclid: f64 = zx
                .iter()
                .zip(&zy)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert_abs_diff_eq!(euclid, x.aitchison_distance(&y).unwrap(), epsilon = 1e-10);
        }

        for _ in 0..1000 {
            let x = random_composition(&mut rng, 4);
            let back = ilr_inv(&ilr(&x, &basis).unwrap(), &basis).unwrap();
            for (a, b) in x.parts().iter().zip(back.parts()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn ilr_is_a_group_homomorphism() {
        let mut rng = StdRng::seed_from_u64(19);
        let basis = ilr_basis(5).unwrap();
        for _ in 0..200 {
            let x = random_composition(&mut rng, 5);
            let y = random_composition(&mut rng, 5);
            let lhs = ilr(&x.perturb(&y).unwrap(), &basis).unwrap();
            let zx = ilr(&x, &basis).unwrap();
            let zy = ilr(&y, &basis).unwrap();
            for (l, (a, b)) in lhs.iter().zip(zx.iter().zip(&zy)) {
                assert_abs_diff_eq!(*l, a + b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn alr_is_not_an_isometry() {
        // A counterexample for d = 3: alr distances differ from Aitchison.
        let x = Composition::new(vec![0.7, 0.2, 0.1]).unwrap();
        let y = Composition::new(vec![0.1, 0.2, 0.7]).unwrap();
        let zx = alr(&x);
        let zy = alr(&y);
        let euclid: f64 = zx
            .iter()
            .zip(&zy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let aitch = x.aitchison_distance(&y).unwrap();
        assert!((euclid - aitch).abs() > 1e-3);
    }

    #[test]
    fn aitchison_inner_matches_clr_dot_product() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..200 {
            let x = random_composition(&mut rng, 6);
            let y = random_composition(&mut rng, 6);
            let dot: f64 = clr(&x).iter().zip(clr(&y)).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(x.aitchison_inner(&y).unwrap(), dot, epsilon = 1e-10);
        }
    }

    #[test]
    fn transform_wrapper_round_trips() {
        let mut rng = StdRng::seed_from_u64(29);
        for kind in [TransformKind::Alr, TransformKind::Clr, TransformKind::Ilr] {
            let t = LogRatioTransform::new(kind, 4).unwrap();
            assert_eq!(t.kind(), kind);
            assert_eq!(t.basis().is_some(), kind == TransformKind::Ilr);
            for _ in 0..100 {
                let x = random_composition(&mut rng, 4);
                let z = t.forward(&x).unwrap();
                let expected = match kind {
                    TransformKind::Clr => 4,
                    _ => 3,
                };
                assert_eq!(z.len(), expected);
                let back = t.inverse(&z).unwrap();
                for (a, b) in x.parts().iter().zip(back.parts()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                }
            }
        }
    }
}
