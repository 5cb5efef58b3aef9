//! Univariate monotone rearrangement between two empirical distributions.

use crate::error::{Error, Result};

/// Empirical quantile coupling `F₁⁻¹ ∘ F₀` for one numeric column.
///
/// Source ranks use the mid-rank convention for ties; the target quantile
/// function linearly interpolates the order statistics at plotting positions
/// `(k + 1/2) / m` and clamps outside them.
#[derive(Debug, Clone)]
pub struct QuantileMap {
    source: Vec<f64>,
    target: Vec<f64>,
}

impl QuantileMap {
    pub fn new(mut source: Vec<f64>, mut target: Vec<f64>) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::DegenerateInput(
                "quantile map needs nonempty source and target".into(),
            ));
        }
        for v in source.iter().chain(target.iter()) {
            if !v.is_finite() {
                return Err(Error::InvalidValue(format!("non-finite value {v}")));
            }
        }
        source.sort_by(f64::total_cmp);
        target.sort_by(f64::total_cmp);
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Mid-rank empirical CDF of `v` in the source sample.
    fn rank(&self, v: f64) -> f64 {
        let n = self.source.len() as f64;
        let less = self.source.partition_point(|&s| s < v);
        let less_eq = self.source.partition_point(|&s| s <= v);
        let equal = less_eq - less;
        (less as f64 + equal as f64 / 2.0) / n
    }

    /// Linearly interpolated target quantile at probability `u`.
    fn quantile(&self, u: f64) -> f64 {
        let m = self.target.len();
        let pos = |k: usize| (k as f64 + 0.5) / m as f64;
        if u <= pos(0) {
            return self.target[0];
        }
        if u >= pos(m - 1) {
            return self.target[m - 1];
        }
        // k with pos(k) <= u < pos(k+1): k = floor(u*m - 1/2).
        let k = ((u * m as f64) - 0.5).floor() as usize;
        let k = k.min(m - 2);
        let t = (u - pos(k)) / (pos(k + 1) - pos(k));
        self.target[k] * (1.0 - t) + self.target[k + 1] * t
    }

    /// Transports a value: rank in the source, read off the target quantile.
    pub fn transport(&self, v: f64) -> f64 {
        self.quantile(self.rank(v))
    }
}
