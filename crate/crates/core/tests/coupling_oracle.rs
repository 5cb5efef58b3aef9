//! Solver correctness against independent oracles.
//!
//! Equal sample sizes with uniform marginals make permutation matrices the
//! extreme points of the transportation polytope, so exhaustive enumeration
//! gives the exact optimum; unequal sizes are checked by dominating randomly
//! sampled feasible plans.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use simplex_ot::coupling::{cost_matrix, dirichlet_cost, solve_coupling};
use simplex_ot::simplex::{Composition, CompositionSample, GroupLabel};

fn random_composition(rng: &mut impl Rng, d: usize) -> Composition {
    let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.02..1.0)).collect();
    Composition::new(raw).unwrap()
}

fn random_sample(rng: &mut impl Rng, group: GroupLabel, n: usize, d: usize) -> CompositionSample {
    let pts = (0..n).map(|_| random_composition(rng, d)).collect();
    CompositionSample::new(group, pts).unwrap()
}

/// Minimum plan cost over all permutation matrices, summed exactly like the
/// solver does (row-major support order, weight times cost per term).
fn permutation_oracle(cost: &DMatrix<f64>) -> f64 {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols());
    let mut indices: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut indices, 0, &mut |perm| {
        let mut total = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            total += 1.0 * cost[(i, j)];
        }
        if total < best {
            best = total;
        }
    });
    best
}

fn permute(indices: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == indices.len() {
        visit(indices);
        return;
    }
    for i in k..indices.len() {
        indices.swap(k, i);
        permute(indices, k + 1, visit);
        indices.swap(k, i);
    }
}

/// Sinkhorn projection of a random positive matrix onto (approximately) the
/// transportation polytope with row sums 1 and column sums n0/n1.
fn random_feasible_plan(rng: &mut impl Rng, n0: usize, n1: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n0, n1, |_, _| rng.random_range(0.05..1.0f64));
    for _ in 0..400 {
        for i in 0..n0 {
            let s: f64 = m.row(i).iter().sum();
            for j in 0..n1 {
                m[(i, j)] /= s;
            }
        }
        let col_target = n0 as f64 / n1 as f64;
        for j in 0..n1 {
            let s: f64 = m.column(j).iter().sum();
            for i in 0..n0 {
                m[(i, j)] *= col_target / s;
            }
        }
    }
    m
}

#[test]
fn equal_sizes_match_exhaustive_permutation_costs_exactly() {
    let mut rng = StdRng::seed_from_u64(2024);
    for n in [3usize, 4] {
        for _ in 0..40 {
            let source = random_sample(&mut rng, GroupLabel::Zero, n, 3);
            let target = random_sample(&mut rng, GroupLabel::One, n, 3);
            let costs = cost_matrix(&source, &target).unwrap();
            let plan = solve_coupling(&costs).unwrap();
            let oracle = permutation_oracle(&costs);
            assert_eq!(
                plan.total_cost(),
                oracle,
                "n = {n}: solver {} vs oracle {oracle}",
                plan.total_cost()
            );
        }
    }
}

#[test]
fn unequal_sizes_dominate_randomly_sampled_feasible_plans() {
    let mut rng = StdRng::seed_from_u64(2025);
    for &(n0, n1) in &[(2usize, 3usize), (3, 4), (4, 2), (4, 3)] {
        let source = random_sample(&mut rng, GroupLabel::Zero, n0, 3);
        let target = random_sample(&mut rng, GroupLabel::One, n1, 3);
        let costs = cost_matrix(&source, &target).unwrap();
        let plan = solve_coupling(&costs).unwrap();
        for _ in 0..1000 {
            let q = random_feasible_plan(&mut rng, n0, n1);
            let q_cost: f64 = (0..n0)
                .map(|i| (0..n1).map(|j| q[(i, j)] * costs[(i, j)]).sum::<f64>())
                .sum();
            assert!(
                plan.total_cost() <= q_cost + 1e-9,
                "({n0},{n1}): solver {} beaten by sample {q_cost}",
                plan.total_cost()
            );
        }
    }
}

#[test]
fn plans_stay_feasible_and_sparse_across_sizes() {
    let mut rng = StdRng::seed_from_u64(2026);
    for _ in 0..30 {
        let n0 = rng.random_range(1..12);
        let n1 = rng.random_range(1..12);
        let source = random_sample(&mut rng, GroupLabel::Zero, n0, 4);
        let target = random_sample(&mut rng, GroupLabel::One, n1, 4);
        let costs = cost_matrix(&source, &target).unwrap();
        let plan = solve_coupling(&costs).unwrap();
        let (row_err, col_err) = plan.marginal_errors();
        assert!(row_err < 1e-8);
        assert!(col_err < 1e-8);
        assert!(plan.support().len() < n0 + n1);
        assert!(plan.support().iter().all(|&(_, _, w)| w > 0.0));
    }
}

#[test]
fn identical_samples_couple_at_zero_cost() {
    let mut rng = StdRng::seed_from_u64(2027);
    let source = random_sample(&mut rng, GroupLabel::Zero, 8, 3);
    let same = CompositionSample::new(GroupLabel::One, source.points().to_vec()).unwrap();
    let costs = cost_matrix(&source, &same).unwrap();
    let plan = solve_coupling(&costs).unwrap();
    assert_eq!(plan.total_cost(), 0.0);
}

#[test]
fn cost_nonnegative_on_many_random_pairs() {
    let mut rng = StdRng::seed_from_u64(2028);
    for _ in 0..20_000 {
        let x = random_composition(&mut rng, 3);
        let y = random_composition(&mut rng, 3);
        assert!(dirichlet_cost(&x, &y).unwrap() >= 0.0);
    }
}
