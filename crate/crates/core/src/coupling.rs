//! Discrete Kantorovich matching on the simplex under the Dirichlet cost.
//!
//! The ground cost is the cross-entropy L-divergence
//! `c(x, y) = log((1/d) Σ y_i/x_i) − (1/d) Σ log(y_i/x_i)`,
//! nonnegative by AM–GM and zero exactly when `y = x`. Couplings between two
//! samples are solved exactly with a transportation simplex over the polytope
//! of plans with row sums `1` and column sums `n₀/n₁`.

use crate::error::{Error, Result};
use crate::logratio::{clr, clr_inv};
use crate::simplex::{closure, Composition, CompositionSample};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Cross-entropy transport cost between two compositions.
///
/// Computed from log-ratios with a shifted log-sum-exp, so compositions with
/// boundary-clamped parts stay finite.
pub fn dirichlet_cost(x: &Composition, y: &Composition) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    let d = x.dim() as f64;
    let logs: Vec<f64> = x
        .parts()
        .iter()
        .zip(y.parts())
        .map(|(a, b)| b.ln() - a.ln())
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mean = logs.iter().sum::<f64>() / d;
    // AM-GM guarantees nonnegativity; clamp rounding noise at zero.
    Ok((lse - d.ln() - mean).max(0.0))
}

/// Entrywise Dirichlet cost between two samples: `C[i][j] = c(x₀ᵢ, x₁ⱼ)`.
pub fn cost_matrix(source: &CompositionSample, target: &CompositionSample) -> Result<DMatrix<f64>> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(source.dim(), target.dim()));
    }
    let mut c = DMatrix::zeros(source.len(), target.len());
    for (i, x) in source.points().iter().enumerate() {
        for (j, y) in target.points().iter().enumerate() {
            c[(i, j)] = dirichlet_cost(x, y)?;
        }
    }
    Ok(c)
}

/// How to collapse a coupling row into a single counterfactual composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualMode {
    /// Componentwise weighted average of the matched target points.
    EuclideanMean,
    /// Weighted average in clr coordinates, mapped back to the simplex.
    AitchisonMean,
    /// The single target point carrying the largest weight (ties: lowest index).
    ArgmaxRow,
}

impl std::str::FromStr for CounterfactualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean_mean" => Ok(Self::EuclideanMean),
            "aitchison_mean" => Ok(Self::AitchisonMean),
            "argmax_row" => Ok(Self::ArgmaxRow),
            other => Err(Error::InvalidParameter(format!(
                "unknown counterfactual mode {other:?}"
            ))),
        }
    }
}

/// An optimal coupling over the transportation polytope.
///
/// Rows sum to one and columns to `n₀/n₁`; `total_cost` is `Σ P_ij C_ij`.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    p: DMatrix<f64>,
    total_cost: f64,
}

impl CouplingPlan {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn n_source(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_target(&self) -> usize {
        self.p.ncols()
    }

    /// Nonzero entries as `(i, j, weight)` triplets in row-major order.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.p.nrows() {
            for j in 0..self.p.ncols() {
                if self.p[(i, j)] > 0.0 {
                    out.push((i, j, self.p[(i, j)]));
                }
            }
        }
        out
    }

    /// Rebuilds a plan from triplets (used when reloading emitted plans).
    pub fn from_triplets(
        n_source: usize,
        n_target: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        if n_source == 0 || n_target == 0 {
            return Err(Error::DegenerateInput("empty coupling".into()));
        }
        let mut p = DMatrix::zeros(n_source, n_target);
        for &(i, j, w) in triplets {
            if i >= n_source || j >= n_target {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j),
                    len: n_source.max(n_target),
                });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidValue(format!(
                    "weight at ({i}, {j}) is invalid: {w}"
                )));
            }
            p[(i, j)] = w;
        }
        Ok(Self { p, total_cost: 0.0 })
    }

    /// Worst deviations of the marginals: `(max |row − 1|, max |col − n₀/n₁|)`.
    pub fn marginal_errors(&self) -> (f64, f64) {
        let ratio = self.n_source() as f64 / self.n_target() as f64;
        let mut row_err: f64 = 0.0;
        for i in 0..self.p.nrows() {
            let s: f64 = self.p.row(i).iter().sum();
            row_err = row_err.max((s - 1.0).abs());
        }
        let mut col_err: f64 = 0.0;
        for j in 0..self.p.ncols() {
            let s: f64 = self.p.column(j).iter().sum();
            col_err = col_err.max((s - ratio).abs());
        }
        (row_err, col_err)
    }

    /// Collapses row `i` of the plan into a counterfactual for the source point.
    pub fn counterfactual_of(
        &self,
        target: &CompositionSample,
        i: usize,
        mode: CounterfactualMode,
    ) -> Result<Composition> {
        if i >= self.p.nrows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.p.nrows(),
            });
        }
        if target.len() != self.p.ncols() {
            return Err(Error::DimensionMismatch(self.p.ncols(), target.len()));
        }
        let row: Vec<f64> = self.p.row(i).iter().copied().collect();
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateInput(format!("plan row {i} is all zero")));
        }
        let weights: Vec<f64> = row.iter().map(|w| w / total).collect();
        match mode {
            CounterfactualMode::EuclideanMean => {
                let d = target.dim();
                let mut acc = vec![0.0; d];
                for (w, y) in weights.iter().zip(target.points()) {
                    if *w == 0.0 {
                        continue;
                    }
                    for (a, &v) in acc.iter_mut().zip(y.parts()) {
                        *a += w * v;
                    }
                }
                Composition::new(acc)
            }
            CounterfactualMode::AitchisonMean => {
                let d = target.dim();
                let mut acc = vec![0.0; d];
                for (w, y) in weights.iter().zip(target.points()) {
                    if *w == 0.0 {
                        continue;
                    }
                    for (a, v) in acc.iter_mut().zip(clr(y)) {
                        *a += w * v;
                    }
                }
                clr_inv(&acc)
            }
            CounterfactualMode::ArgmaxRow => {
                let mut best = 0usize;
                for (j, w) in weights.iter().enumerate() {
                    if *w > weights[best] {
                        best = j;
                    }
                }
                Ok(target.points()[best].clone())
            }
        }
    }
}

/// Exact minimum of `Σ P_ij C_ij` over plans with uniform marginals.
///
/// Solves the balanced problem with masses `1/n₀` and `1/n₁` by a
/// transportation simplex, then rescales rows to sum to one. The entering
/// rule is most-negative reduced cost with lowest row-major index on ties;
/// after a long streak of degenerate pivots it switches to Bland's rule
/// (first negative index), whose anti-cycling guarantee bounds every stall.
pub fn solve_coupling(cost: &DMatrix<f64>) -> Result<CouplingPlan> {
    let (n0, n1) = (cost.nrows(), cost.ncols());
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateInput("empty sample".into()));
    }
    for v in cost.iter() {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::InvalidValue(format!(
                "cost entries must be finite and nonnegative, got {v}"
            )));
        }
    }

    let a = vec![1.0 / n0 as f64; n0];
    let b = vec![1.0 / n1 as f64; n1];
    let flow = transportation_simplex(&a, &b, cost)?;

    let scale = n0 as f64;
    let mut p = DMatrix::zeros(n0, n1);
    let mut total_cost = 0.0;
    for i in 0..n0 {
        for j in 0..n1 {
            let w = flow[(i, j)] * scale;
            p[(i, j)] = w;
            if w > 0.0 {
                total_cost += w * cost[(i, j)];
            }
        }
    }
    Ok(CouplingPlan { p, total_cost })
}

/// Classic transportation simplex (MODI) on a dense bipartite problem.
fn transportation_simplex(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n0 = a.len();
    let n1 = b.len();
    let n_nodes = n0 + n1;
    let cost_scale = cost.iter().copied().fold(1.0_f64, f64::max);
    let tol = 1e-12 * cost_scale;

    // Basic cells as parallel arrays; the basis always forms a spanning tree
    // over row-nodes 0..n0 and column-nodes n0..n0+n1.
    let mut basic_i: Vec<usize> = Vec::with_capacity(n_nodes - 1);
    let mut basic_j: Vec<usize> = Vec::with_capacity(n_nodes - 1);
    let mut basic_flow: Vec<f64> = Vec::with_capacity(n_nodes - 1);

    // Northwest-corner start; ties consume the row first, leaving a
    // degenerate zero-flow cell so the basis keeps n0 + n1 - 1 cells.
    {
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let f = ra[i].min(rb[j]);
            basic_i.push(i);
            basic_j.push(j);
            basic_flow.push(f);
            ra[i] -= f;
            rb[j] -= f;
            if i == n0 - 1 && j == n1 - 1 {
                break;
            }
            if ra[i] <= 0.0 && i < n0 - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    debug_assert_eq!(basic_i.len(), n_nodes - 1);

    let max_pivots = 100_000 + 500 * n_nodes;
    // Uniform marginals make these problems heavily degenerate; Bland alone
    // stalls for tens of thousands of pivots, so it is reserved for breaking
    // degenerate streaks.
    const STALL_LIMIT: usize = 100;
    let mut degenerate_streak = 0usize;
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    let mut duals = vec![0.0_f64; n_nodes];
    let mut parent_edge = vec![usize::MAX; n_nodes];
    let mut order: Vec<usize> = Vec::with_capacity(n_nodes);

    for pivot in 0..=max_pivots {
        // Rebuild tree adjacency and propagate duals from row-node 0.
        for adj in adjacency.iter_mut() {
            adj.clear();
        }
        for (e, (&bi, &bj)) in basic_i.iter().zip(&basic_j).enumerate() {
            adjacency[bi].push(e);
            adjacency[n0 + bj].push(e);
        }
        order.clear();
        parent_edge.fill(usize::MAX);
        duals[0] = 0.0;
        order.push(0);
        let mut visited = vec![false; n_nodes];
        visited[0] = true;
        let mut head = 0;
        while head < order.len() {
            let node = order[head];
            head += 1;
            for &e in &adjacency[node] {
                let (ri, cj) = (basic_i[e], basic_j[e]);
                let other = if node == ri { n0 + cj } else { ri };
                if !visited[other] {
                    visited[other] = true;
                    // u_i + v_j = c_ij on basic cells.
                    duals[other] = cost[(ri, cj)] - duals[node];
                    parent_edge[other] = e;
                    order.push(other);
                }
            }
        }
        if order.len() != n_nodes {
            return Err(Error::SolverFailure("basis lost connectivity".into()));
        }

        let mut entering: Option<(usize, usize)> = None;
        if degenerate_streak < STALL_LIMIT {
            // Most-negative reduced cost; row-major order breaks ties.
            let mut best = -tol;
            for i in 0..n0 {
                for j in 0..n1 {
                    let rc = cost[(i, j)] - duals[i] - duals[n0 + j];
                    if rc < best {
                        best = rc;
                        entering = Some((i, j));
                    }
                }
            }
        } else {
            // Bland: first negative index, guaranteed to escape the stall.
            'scan: for i in 0..n0 {
                for j in 0..n1 {
                    let rc = cost[(i, j)] - duals[i] - duals[n0 + j];
                    if rc < -tol {
                        entering = Some((i, j));
                        break 'scan;
                    }
                }
            }
        }
        let Some((ei, ej)) = entering else {
            // Optimal: emit the flow matrix.
            let mut flow = DMatrix::zeros(n0, n1);
            for ((&bi, &bj), &f) in basic_i.iter().zip(&basic_j).zip(&basic_flow) {
                flow[(bi, bj)] = f.max(0.0);
            }
            return Ok(flow);
        };
        if pivot == max_pivots {
            return Err(Error::SolverFailure(format!(
                "cycling guard exceeded after {max_pivots} pivots"
            )));
        }

        // The entering cell closes a unique cycle: the tree path from
        // column-node ej up to row-node ei, found via the BFS parents.
        let mut path_edges = Vec::new();
        {
            // Edges from each endpoint up to the root, then strip the
            // common suffix to keep only the connecting path.
            let up_from = |start: usize| -> Vec<usize> {
                let mut edges = Vec::new();
                let mut node = start;
                while parent_edge[node] != usize::MAX {
                    let e = parent_edge[node];
                    edges.push(e);
                    let (ri, cj) = (basic_i[e], basic_j[e]);
                    node = if node == ri { n0 + cj } else { ri };
                }
                edges
            };
            let mut from_col = up_from(n0 + ej);
            let mut from_row = up_from(ei);
            while let (Some(&x), Some(&y)) = (from_col.last(), from_row.last()) {
                if x == y {
                    from_col.pop();
                    from_row.pop();
                } else {
                    break;
                }
            }
            // Walk column-side edges first so signs alternate -, +, -, ...
            // starting at the edge sharing column ej with the entering cell.
            path_edges.extend(from_col);
            from_row.reverse();
            path_edges.extend(from_row);
        }

        // Alternate signs along the cycle; the entering cell takes +θ and the
        // leaving edge is the lowest-index cell among the flow minimizers.
        let mut theta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        for (k, &e) in path_edges.iter().enumerate() {
            if k % 2 == 0 {
                let f = basic_flow[e];
                let replace = match leaving {
                    None => true,
                    Some(cur) => {
                        f < theta
                            || (f == theta
                                && (basic_i[e], basic_j[e]) < (basic_i[cur], basic_j[cur]))
                    }
                };
                if replace {
                    theta = f;
                    leaving = Some(e);
                }
            }
        }
        let leaving =
            leaving.ok_or_else(|| Error::SolverFailure("cycle without a leaving edge".into()))?;

        for (k, &e) in path_edges.iter().enumerate() {
            if k % 2 == 0 {
                basic_flow[e] -= theta;
            } else {
                basic_flow[e] += theta;
            }
        }
        basic_i[leaving] = ei;
        basic_j[leaving] = ej;
        basic_flow[leaving] = theta;
        if theta > 0.0 {
            degenerate_streak = 0;
        } else {
            degenerate_streak += 1;
        }
    }
    unreachable!("loop exits via optimality or the cycling guard");
}

/// Group-geodesic interpolation `x ⋄ ((1−t) uniform + t (y ⋄ x⁻¹))`.
pub fn diamond_interpolate(x: &Composition, y: &Composition, t: f64) -> Result<Composition> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "interpolation time must lie in [0, 1], got {t}"
        )));
    }
    let p = y.perturb(&x.inverse())?;
    let d = x.dim() as f64;
    let mixed: Vec<f64> = p.parts().iter().map(|pi| (1.0 - t) / d + t * pi).collect();
    x.perturb(&closure(&mixed)?)
}
