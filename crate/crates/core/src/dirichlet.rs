//! Dirichlet density evaluation and maximum-likelihood fitting.
//!
//! Used for diagnostic density contours over composition samples. The MLE
//! runs Newton iterations on the concentration vector from a
//! method-of-moments start, with step halving so the log-likelihood never
//! decreases.

use crate::error::{Error, Result};
use crate::simplex::{Composition, CompositionSample};
use crate::special::{digamma, ln_gamma, trigamma};

/// Concentration parameters of a Dirichlet distribution; all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidDimension(alpha.len()));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::InvalidValue(format!(
                    "concentration {i} must be positive and finite, got {a}"
                )));
            }
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `ln B(α) = Σ ln Γ(α_i) − ln Γ(Σ α_i)`.
    pub fn ln_beta(&self) -> f64 {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total)
    }
}

/// Log-density `Σ (α_i − 1) ln x_i − ln B(α)` of an interior composition.
pub fn log_density(params: &DirichletParams, x: &Composition) -> Result<f64> {
    if params.dim() != x.dim() {
        return Err(Error::DimensionMismatch(params.dim(), x.dim()));
    }
    let kernel: f64 = params
        .alpha
        .iter()
        .zip(x.parts())
        .map(|(&a, &p)| (a - 1.0) * p.ln())
        .sum();
    Ok(kernel - params.ln_beta())
}

/// Outcome of the maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct DirichletFit {
    pub params: DirichletParams,
    pub converged: bool,
    pub iterations: usize,
    /// Mean log-likelihood per observation at the returned parameters.
    pub log_likelihood: f64,
}

const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-10;

/// Fits Dirichlet concentrations by Newton steps on the log-likelihood.
///
/// Requires `n ≥ d` interior points. Non-convergence within the iteration
/// budget returns the last iterate with `converged = false`.
pub fn fit_mle(sample: &CompositionSample) -> Result<DirichletFit> {
    let d = sample.dim();
    let n = sample.len();
    if n < d {
        return Err(Error::DegenerateInput(format!(
            "need at least d = {d} observations, got {n}"
        )));
    }

    // Sufficient statistics: mean log parts.
    let mut mean_log = vec![0.0_f64; d];
    for p in sample.points() {
        for (m, &v) in mean_log.iter_mut().zip(p.parts()) {
            *m += v.ln();
        }
    }
    for m in mean_log.iter_mut() {
        *m /= n as f64;
    }

    let mut alpha = moment_estimate(sample);
    let mut ll = mean_log_likelihood(&alpha, &mean_log);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        let total: f64 = alpha.iter().sum();
        let psi_total = digamma(total);
        let grad: Vec<f64> = alpha
            .iter()
            .zip(&mean_log)
            .map(|(&a, &m)| psi_total - digamma(a) + m)
            .collect();
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < GRAD_TOL {
            converged = true;
            break;
        }

        // Newton step via the diagonal-plus-rank-one Hessian structure:
        // H/n = c 11ᵀ − diag(q) with q_i = ψ'(α_i), c = ψ'(Σα).
        let c = trigamma(total);
        let q: Vec<f64> = alpha.iter().map(|&a| trigamma(a)).collect();
        let s1: f64 = grad.iter().zip(&q).map(|(g, qi)| g / qi).sum();
        let s2: f64 = q.iter().map(|qi| 1.0 / qi).sum();
        let b = c * s1 / (1.0 - c * s2);
        let step: Vec<f64> = grad.iter().zip(&q).map(|(g, qi)| (g + b) / qi).collect();

        // Halve until the iterate stays positive and the likelihood does
        // not decrease.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = alpha
                .iter()
                .zip(&step)
                .map(|(a, s)| a + scale * s)
                .collect();
            if candidate.iter().all(|&a| a > 0.0 && a.is_finite()) {
                let cand_ll = mean_log_likelihood(&candidate, &mean_log);
                if cand_ll >= ll - 1e-15 {
                    alpha = candidate;
                    ll = cand_ll;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(DirichletFit {
        params: DirichletParams::new(alpha)?,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

/// Method-of-moments concentration estimate: per-coordinate precision
/// estimates averaged, then scaled by the mean composition. Used as the
/// starting point of [`fit_mle`] and exposed for diagnostics.
pub fn moment_estimate(sample: &CompositionSample) -> Vec<f64> {
    let d = sample.dim();
    let n = sample.len() as f64;
    let mut mean = vec![0.0_f64; d];
    for p in sample.points() {
        for (m, &v) in mean.iter_mut().zip(p.parts()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0_f64; d];
    for p in sample.points() {
        for ((v, &x), &m) in var.iter_mut().zip(p.parts()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    for v in var.iter_mut() {
        *v /= (n - 1.0).max(1.0);
    }

    let mut precision_sum = 0.0;
    let mut count = 0usize;
    for (&m, &v) in mean.iter().zip(&var) {
        if v > 1e-12 {
            let est = m * (1.0 - m) / v - 1.0;
            if est.is_finite() && est > 0.0 {
                precision_sum += est;
                count += 1;
            }
        }
    }
    let precision = if count > 0 {
        (precision_sum / count as f64).max(1e-2)
    } else {
        d as f64
    };
    mean.iter().map(|&m| (m * precision).max(1e-3)).collect()
}

/// Mean log-likelihood given mean-log sufficient statistics.
fn mean_log_likelihood(alpha: &[f64], mean_log: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let kernel: f64 = alpha
        .iter()
        .zip(mean_log)
        .map(|(&a, &m)| (a - 1.0) * m)
        .sum();
    kernel + ln_gamma(total) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}
