//! Python bindings: compositions as plain `list[float]`, samples as
//! `list[list[float]]`, with the fitted transports wrapped in classes.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use simplex_ot::coupling::{self, CounterfactualMode, CouplingPlan};
use simplex_ot::dirichlet::{self, DirichletParams};
use simplex_ot::encoder::{self, LabelMode, MlrConfig, MultinomialModel};
use simplex_ot::gaussian::GaussianTransportMap;
use simplex_ot::logratio::{self, TransformKind};
use simplex_ot::quantile::QuantileMap;
use simplex_ot::simplex::{Composition, CompositionSample, GroupLabel};
use simplex_ot::ternary;

fn py_err(e: simplex_ot::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn composition(parts: Vec<f64>) -> PyResult<Composition> {
    Composition::new(parts).map_err(py_err)
}

fn sample(group: GroupLabel, points: Vec<Vec<f64>>) -> PyResult<CompositionSample> {
    let pts = points
        .into_iter()
        .map(Composition::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    CompositionSample::new(group, pts).map_err(py_err)
}

fn transform_kind(name: &str) -> PyResult<TransformKind> {
    name.parse().map_err(py_err)
}

fn cf_mode(name: &str) -> PyResult<CounterfactualMode> {
    name.parse().map_err(py_err)
}

/// Closure operator: lift zeros to `epsilon`, normalize to unit sum.
#[pyfunction]
#[pyo3(signature = (raw, epsilon = None))]
fn closure(raw: Vec<f64>, epsilon: Option<f64>) -> PyResult<Vec<f64>> {
    let eps = epsilon.unwrap_or(simplex_ot::simplex::DEFAULT_EPSILON);
    Ok(simplex_ot::simplex::closure_with_epsilon(&raw, eps)
        .map_err(py_err)?
        .into_parts())
}

#[pyfunction]
fn perturb(x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
    let out = composition(x)?.perturb(&composition(y)?).map_err(py_err)?;
    Ok(out.into_parts())
}

#[pyfunction]
fn inverse(x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(composition(x)?.inverse().into_parts())
}

#[pyfunction]
fn aitchison_inner(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    composition(x)?
        .aitchison_inner(&composition(y)?)
        .map_err(py_err)
}

#[pyfunction]
fn aitchison_distance(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    composition(x)?
        .aitchison_distance(&composition(y)?)
        .map_err(py_err)
}

#[pyfunction]
fn alr(x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(logratio::alr(&composition(x)?))
}

#[pyfunction]
fn alr_inv(z: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(logratio::alr_inv(&z).map_err(py_err)?.into_parts())
}

#[pyfunction]
fn clr(x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(logratio::clr(&composition(x)?))
}

#[pyfunction]
fn clr_inv(z: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(logratio::clr_inv(&z).map_err(py_err)?.into_parts())
}

/// Orthonormal zero-sum contrast basis as a `d x (d-1)` nested list.
#[pyfunction]
fn ilr_basis(d: usize) -> PyResult<Vec<Vec<f64>>> {
    let m = logratio::ilr_basis(d).map_err(py_err)?;
    Ok((0..d)
        .map(|i| (0..d - 1).map(|j| m[(i, j)]).collect())
        .collect())
}

#[pyfunction]
fn ilr(x: Vec<f64>) -> PyResult<Vec<f64>> {
    let c = composition(x)?;
    let basis = logratio::ilr_basis(c.dim()).map_err(py_err)?;
    logratio::ilr(&c, &basis).map_err(py_err)
}

#[pyfunction]
fn ilr_inv(z: Vec<f64>) -> PyResult<Vec<f64>> {
    let basis = logratio::ilr_basis(z.len() + 1).map_err(py_err)?;
    Ok(logratio::ilr_inv(&z, &basis).map_err(py_err)?.into_parts())
}

/// Cross-entropy transport cost between two compositions.
#[pyfunction]
fn dirichlet_cost(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    coupling::dirichlet_cost(&composition(x)?, &composition(y)?).map_err(py_err)
}

#[pyfunction]
fn diamond_interpolate(x: Vec<f64>, y: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    Ok(
        coupling::diamond_interpolate(&composition(x)?, &composition(y)?, t)
            .map_err(py_err)?
            .into_parts(),
    )
}

#[pyfunction]
fn cost_matrix(source: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let s = sample(GroupLabel::Zero, source)?;
    let t = sample(GroupLabel::One, target)?;
    let c = coupling::cost_matrix(&s, &t).map_err(py_err)?;
    Ok((0..c.nrows())
        .map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect())
        .collect())
}

/// An optimal coupling with row sums one and column sums `n0/n1`.
#[pyclass(name = "CouplingPlan")]
struct PyCouplingPlan {
    inner: CouplingPlan,
    target: CompositionSample,
}

#[pymethods]
impl PyCouplingPlan {
    #[getter]
    fn total_cost(&self) -> f64 {
        self.inner.total_cost()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let p = self.inner.matrix();
        (0..p.nrows())
            .map(|i| (0..p.ncols()).map(|j| p[(i, j)]).collect())
            .collect()
    }

    /// Nonzero `(i, j, weight)` triplets in row-major order.
    fn support(&self) -> Vec<(usize, usize, f64)> {
        self.inner.support()
    }

    fn marginal_errors(&self) -> (f64, f64) {
        self.inner.marginal_errors()
    }

    /// Collapse row `i` into one composition: mode is `euclidean_mean`,
    /// `aitchison_mean` or `argmax_row`.
    #[pyo3(signature = (i, mode = "euclidean_mean"))]
    fn counterfactual_of(&self, i: usize, mode: &str) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .counterfactual_of(&self.target, i, cf_mode(mode)?)
            .map_err(py_err)?
            .into_parts())
    }
}

/// Exact Kantorovich coupling of two samples under the Dirichlet cost.
#[pyfunction]
fn solve_coupling(source: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> PyResult<PyCouplingPlan> {
    let s = sample(GroupLabel::Zero, source)?;
    let t = sample(GroupLabel::One, target)?;
    let costs = coupling::cost_matrix(&s, &t).map_err(py_err)?;
    let plan = coupling::solve_coupling(&costs).map_err(py_err)?;
    Ok(PyCouplingPlan {
        inner: plan,
        target: t,
    })
}

/// Fitted Gaussian optimal map in log-ratio coordinates.
#[pyclass(name = "GaussianMap")]
struct PyGaussianMap {
    inner: GaussianTransportMap,
}

#[pymethods]
impl PyGaussianMap {
    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .apply(&composition(x)?)
            .map_err(py_err)?
            .into_parts())
    }

    fn interpolate(&self, x: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .interpolate(&composition(x)?, t)
            .map_err(py_err)?
            .into_parts())
    }

    /// `(mean, covariance)` of the displacement-interpolated law at `t`.
    fn interpolated_law(&self, t: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let (mu, sigma) = self.inner.interpolated_law(t).map_err(py_err)?;
        Ok((mu.iter().copied().collect(), matrix_rows(&sigma)))
    }

    /// Relative Frobenius residual of `A S0 A = S1`.
    fn residual(&self) -> f64 {
        self.inner.residual()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.matrix())
    }

    fn mean_source(&self) -> Vec<f64> {
        self.inner.mean_source().iter().copied().collect()
    }

    fn mean_target(&self) -> Vec<f64> {
        self.inner.mean_target().iter().copied().collect()
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Fit the Gaussian transport between two composition samples;
/// transform is `alr`, `clr` or `ilr`.
#[pyfunction]
#[pyo3(signature = (source, target, transform = "clr"))]
fn fit_gaussian(
    source: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    transform: &str,
) -> PyResult<PyGaussianMap> {
    let s = sample(GroupLabel::Zero, source)?;
    let t = sample(GroupLabel::One, target)?;
    let inner = GaussianTransportMap::fit(&s, &t, transform_kind(transform)?).map_err(py_err)?;
    Ok(PyGaussianMap { inner })
}

/// Multinomial logistic encoder with the first category as reference.
#[pyclass(name = "MultinomialModel")]
struct PyMultinomialModel {
    inner: MultinomialModel,
}

#[pymethods]
impl PyMultinomialModel {
    fn predict(&self, row: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&row).map_err(py_err)?.into_parts())
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn coefficients(&self) -> Vec<Vec<f64>> {
        self.inner.coefficients().to_vec()
    }
}

#[pyfunction]
#[pyo3(signature = (features, labels, n_categories, lambda_ = 1e-4, max_iter = 500, tol = 1e-8))]
fn fit_mlr(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_categories: usize,
    lambda_: f64,
    max_iter: usize,
    tol: f64,
) -> PyResult<PyMultinomialModel> {
    let config = MlrConfig {
        lambda: lambda_,
        max_iter,
        tol,
    };
    let inner = encoder::fit_mlr(&features, &labels, n_categories, &config).map_err(py_err)?;
    Ok(PyMultinomialModel { inner })
}

/// Label from a composition: argmax rule, or seeded sampling when a seed
/// is given.
#[pyfunction]
#[pyo3(signature = (x, categories, seed = None))]
fn to_label(x: Vec<f64>, categories: Vec<String>, seed: Option<u64>) -> PyResult<String> {
    let mode = match seed {
        None => LabelMode::Argmax,
        Some(s) => LabelMode::Sample { seed: s },
    };
    Ok(encoder::to_label(&composition(x)?, &categories, mode)
        .map_err(py_err)?
        .to_string())
}

#[pyfunction]
fn dirichlet_log_density(alpha: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
    let params = DirichletParams::new(alpha).map_err(py_err)?;
    dirichlet::log_density(&params, &composition(x)?).map_err(py_err)
}

/// Maximum-likelihood Dirichlet concentrations: `(alpha, converged)`.
#[pyfunction]
fn fit_dirichlet(points: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, bool)> {
    let s = sample(GroupLabel::Zero, points)?;
    let fit = dirichlet::fit_mle(&s).map_err(py_err)?;
    Ok((fit.params.alpha().to_vec(), fit.converged))
}

/// Empirical quantile transport `F1^{-1}(F0(v))`.
#[pyfunction]
fn quantile_transport(source: Vec<f64>, target: Vec<f64>, v: f64) -> PyResult<f64> {
    let map = QuantileMap::new(source, target).map_err(py_err)?;
    Ok(map.transport(v))
}

/// Unit-triangle embedding of a 3-part composition.
#[pyfunction]
fn barycentric_to_xy(x: Vec<f64>) -> PyResult<(f64, f64)> {
    ternary::barycentric_to_xy(&composition(x)?).map_err(py_err)
}

#[pymodule]
fn simplex_ot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(closure, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(inverse, m)?)?;
    m.add_function(wrap_pyfunction!(aitchison_inner, m)?)?;
    m.add_function(wrap_pyfunction!(aitchison_distance, m)?)?;
    m.add_function(wrap_pyfunction!(alr, m)?)?;
    m.add_function(wrap_pyfunction!(alr_inv, m)?)?;
    m.add_function(wrap_pyfunction!(clr, m)?)?;
    m.add_function(wrap_pyfunction!(clr_inv, m)?)?;
    m.add_function(wrap_pyfunction!(ilr_basis, m)?)?;
    m.add_function(wrap_pyfunction!(ilr, m)?)?;
    m.add_function(wrap_pyfunction!(ilr_inv, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_cost, m)?)?;
    m.add_function(wrap_pyfunction!(diamond_interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(cost_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(solve_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mlr, m)?)?;
    m.add_function(wrap_pyfunction!(to_label, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_log_density, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_transport, m)?)?;
    m.add_function(wrap_pyfunction!(barycentric_to_xy, m)?)?;
    m.add_class::<PyCouplingPlan>()?;
    m.add_class::<PyGaussianMap>()?;
    m.add_class::<PyMultinomialModel>()?;
    Ok(())
}
