//! Encoding categorical columns as compositions.
//!
//! A multinomial logistic model predicts each categorical column from the
//! remaining features; its softmax scores are the composition. Externally
//! computed scores can be ingested instead. Labels are recovered from
//! compositions by the argmax rule or by seeded sampling.

use crate::error::{Error, Result};
use crate::simplex::{closure_with_epsilon, Composition, DEFAULT_EPSILON};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

/// Fitting controls for the multinomial logistic model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlrConfig {
    /// L2 penalty on non-intercept coefficients (mean-loss scale).
    pub lambda: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient norm of the mean loss.
    pub tol: f64,
}

impl Default for MlrConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Multinomial logistic model with the first category as reference.
///
/// One coefficient vector per non-reference category, each over an intercept
/// plus `p` predictors; the reference category carries an implicit zero score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultinomialModel {
    n_categories: usize,
    n_features: usize,
    /// `(d-1)` rows of length `p+1`, intercept first.
    coefficients: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

impl MultinomialModel {
    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    /// Softmax scores over `(0, x'β₂, …, x'β_d)`, max-shifted, floored at ε.
    pub fn predict(&self, row: &[f64]) -> Result<Composition> {
        self.predict_with_epsilon(row, DEFAULT_EPSILON)
    }

    pub fn predict_with_epsilon(&self, row: &[f64], epsilon: f64) -> Result<Composition> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch(self.n_features, row.len()));
        }
        let mut scores = vec![0.0_f64; self.n_categories];
        for (k, beta) in self.coefficients.iter().enumerate() {
            let mut s = beta[0];
            for (b, x) in beta[1..].iter().zip(row) {
                s += b * x;
            }
            scores[k + 1] = s;
        }
        let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = scores.iter().map(|s| (s - shift).exp()).collect();
        closure_with_epsilon(&raw, epsilon)
    }
}

/// Mean penalized negative log-likelihood and, when requested, its gradient.
///
/// The gradient layout matches `coefficients`: `(d-1) x (p+1)` with the
/// intercept first in each row; intercepts are unpenalized.
pub fn mlr_loss_and_gradient(
    features: &[Vec<f64>],
    labels: &[usize],
    coefficients: &[Vec<f64>],
    lambda: f64,
    gradient: Option<&mut [Vec<f64>]>,
) -> f64 {
    let n = features.len();
    let d = coefficients.len() + 1;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = gradient;
    if let Some(g) = &mut grad {
        for row in g.iter_mut() {
            row.fill(0.0);
        }
    }

    let mut scores = vec![0.0_f64; d];
    let mut probs = vec![0.0_f64; d];
    for (x, &y) in features.iter().zip(labels) {
        scores[0] = 0.0;
        for (k, beta) in coefficients.iter().enumerate() {
            let mut s = beta[0];
            for (b, v) in beta[1..].iter().zip(x) {
                s += b * v;
            }
            scores[k + 1] = s;
        }
        let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, &s) in probs.iter_mut().zip(scores.iter()) {
            *p = (s - shift).exp();
            total += *p;
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        loss += inv_n * (total.ln() + shift - scores[y]);

        if let Some(g) = grad.as_deref_mut() {
            for k in 1..d {
                let coef = inv_n * (probs[k] - if y == k { 1.0 } else { 0.0 });
                let row = &mut g[k - 1];
                row[0] += coef;
                for (r, v) in row[1..].iter_mut().zip(x) {
                    *r += coef * v;
                }
            }
        }
    }

    // L2 penalty, intercepts excluded.
    let mut penalty = 0.0;
    for beta in coefficients {
        for &b in &beta[1..] {
            penalty += b * b;
        }
    }
    loss += 0.5 * lambda * penalty;
    if let Some(g) = grad {
        for (grow, beta) in g.iter_mut().zip(coefficients) {
            for (gv, &b) in grow[1..].iter_mut().zip(&beta[1..]) {
                *gv += lambda * b;
            }
        }
    }
    loss
}

/// Fits the model by full-batch gradient descent with backtracking line
/// search from zero initialization; the training loss is monotone
/// non-increasing across iterations.
///
/// Predictors are standardized internally (the L2 penalty acts on the
/// standardized coefficients, intercepts excluded) and the returned
/// coefficients are unfolded back to the raw feature scale.
pub fn fit_mlr(
    features: &[Vec<f64>],
    labels: &[usize],
    n_categories: usize,
    config: &MlrConfig,
) -> Result<MultinomialModel> {
    if n_categories < 2 {
        return Err(Error::InvalidDimension(n_categories));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch(features.len(), labels.len()));
    }
    if features.is_empty() {
        return Err(Error::DegenerateInput("no training rows".into()));
    }
    let p = features[0].len();
    for (i, row) in features.iter().enumerate() {
        if row.len() != p {
            return Err(Error::DimensionMismatch(p, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite feature value in row {i}"
            )));
        }
    }
    let mut seen = vec![false; n_categories];
    for &y in labels {
        if y >= n_categories {
            return Err(Error::IndexOutOfRange {
                index: y,
                len: n_categories,
            });
        }
        seen[y] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingCategory(missing.to_string()));
    }

    // Standardize predictors; constant columns get unit scale and stay at
    // coefficient zero under the penalty.
    let n = features.len() as f64;
    let mut mean = vec![0.0_f64; p];
    for row in features {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0_f64; p];
    for row in features {
        for ((s, &v), &m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = s.sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((&v, &m), &s)| (v - m) / s)
                .collect()
        })
        .collect();
    let features = &standardized;

    let mut coefficients = vec![vec![0.0_f64; p + 1]; n_categories - 1];
    let mut gradient = vec![vec![0.0_f64; p + 1]; n_categories - 1];
    let mut loss = mlr_loss_and_gradient(
        features,
        labels,
        &coefficients,
        config.lambda,
        Some(&mut gradient),
    );

    let mut converged = false;
    let mut iterations = 0;
    let mut step = 1.0_f64;
    for iter in 0..config.max_iter {
        iterations = iter + 1;
        let grad_sq: f64 = gradient.iter().flat_map(|r| r.iter()).map(|g| g * g).sum();
        if grad_sq.sqrt() < config.tol {
            converged = true;
            break;
        }

        // Armijo backtracking, warm-started from the previous step size.
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        while step > 1e-20 {
            let candidate: Vec<Vec<f64>> = coefficients
                .iter()
                .zip(&gradient)
                .map(|(c, g)| c.iter().zip(g).map(|(ci, gi)| ci - step * gi).collect())
                .collect();
            let cand_loss =
                mlr_loss_and_gradient(features, labels, &candidate, config.lambda, None);
            if cand_loss <= loss - 1e-4 * step * grad_sq {
                coefficients = candidate;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent direction representable at this precision.
            break;
        }
        loss = mlr_loss_and_gradient(
            features,
            labels,
            &coefficients,
            config.lambda,
            Some(&mut gradient),
        );
    }

    // Unfold to raw-scale coefficients: beta_j / s_j, intercept absorbing
    // the centering shift.
    for beta in coefficients.iter_mut() {
        let mut shift = 0.0;
        for ((b, &m), &s) in beta[1..].iter_mut().zip(&mean).zip(&scale) {
            *b /= s;
            shift += *b * m;
        }
        beta[0] -= shift;
    }

    Ok(MultinomialModel {
        n_categories,
        n_features: p,
        coefficients,
        converged,
        iterations,
    })
}

/// One-hot design row over selected dataset columns: numeric columns pass
/// through, categorical columns expand with the first category as the
/// reference level.
pub fn design_row(
    schema: &crate::io::DatasetSchema,
    columns: &[usize],
    row: &[String],
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &c in columns {
        let col = &schema.columns[c];
        match col.kind {
            crate::io::ColumnKind::Numeric => {
                let v: f64 = row[c].trim().parse().map_err(|_| Error::ColumnType {
                    column: col.name.clone(),
                    line: 0,
                    reason: format!("not a number: {:?}", row[c]),
                })?;
                out.push(v);
            }
            crate::io::ColumnKind::Categorical => {
                for cat in &col.categories[1..] {
                    out.push(if &row[c] == cat { 1.0 } else { 0.0 });
                }
            }
        }
    }
    Ok(out)
}

/// Where an encoded column's scores came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FittedMlr,
    ExternalFile,
}

/// A categorical column encoded as one composition per dataset row.
#[derive(Debug, Clone)]
pub struct EncodedColumn {
    pub name: String,
    pub categories: Vec<String>,
    pub scores: Vec<Composition>,
    pub provenance: Provenance,
}

impl EncodedColumn {
    pub fn dim(&self) -> usize {
        self.categories.len()
    }
}

/// Reads externally computed scores from a CSV with one `<col>__<category>`
/// probability column per category; rows are closed onto the simplex.
///
/// Row sums may deviate from one by at most 0.01 before closure.
pub fn load_external_scores(
    path: &Path,
    column: &str,
    categories: &[String],
    epsilon: f64,
) -> Result<EncodedColumn> {
    let mut file = std::fs::File::open(path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    load_external_scores_from_str(&text, column, categories, epsilon)
}

pub fn load_external_scores_from_str(
    text: &str,
    column: &str,
    categories: &[String],
    epsilon: f64,
) -> Result<EncodedColumn> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut indices = Vec::with_capacity(categories.len());
    for cat in categories {
        let want = format!("{column}__{cat}");
        let idx = headers
            .iter()
            .position(|h| h == want)
            .ok_or_else(|| Error::Schema(format!("score column {want:?} not found")))?;
        indices.push(idx);
    }

    let mut scores = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut raw = Vec::with_capacity(categories.len());
        for &idx in &indices {
            let cell = record.get(idx).ok_or(Error::Parse {
                line: row_idx + 2,
                reason: "short record".into(),
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedScores {
                row: row_idx,
                reason: format!("not a number: {cell:?}"),
            })?;
            if v < 0.0 {
                return Err(Error::InvalidValue(format!(
                    "negative probability {v} at row {row_idx}"
                )));
            }
            raw.push(v);
        }
        let total: f64 = raw.iter().sum();
        if (total - 1.0).abs() > 0.01 {
            return Err(Error::MalformedScores {
                row: row_idx,
                reason: format!("probabilities sum to {total}, expected 1 within 0.01"),
            });
        }
        scores.push(closure_with_epsilon(&raw, epsilon)?);
    }

    Ok(EncodedColumn {
        name: column.to_string(),
        categories: categories.to_vec(),
        scores,
        provenance: Provenance::ExternalFile,
    })
}

/// How to turn a composition back into a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Largest part wins; ties go to the lowest index.
    Argmax,
    /// Draw from the composition as a probability vector, reproducibly.
    Sample { seed: u64 },
}

/// Converts a composition back to a category label.
pub fn to_label<'a>(x: &Composition, categories: &'a [String], mode: LabelMode) -> Result<&'a str> {
    if x.dim() != categories.len() {
        return Err(Error::DimensionMismatch(categories.len(), x.dim()));
    }
    let idx = match mode {
        LabelMode::Argmax => {
            let mut best = 0usize;
            for (i, p) in x.parts().iter().enumerate() {
                if *p > x.parts()[best] {
                    best = i;
                }
            }
            best
        }
        LabelMode::Sample { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut chosen = x.dim() - 1;
            for (i, p) in x.parts().iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    Ok(&categories[idx])
}
