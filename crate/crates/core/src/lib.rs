//! Counterfactuals for categorical variables via transport on the simplex.
//!
//! Categorical columns are first encoded as compositions (predicted class
//! probabilities on the open simplex), then transported between the two
//! groups of a binary sensitive attribute, either with Gaussian optimal
//! transport in log-ratio coordinates or with exact discrete matching under
//! the Dirichlet cross-entropy cost. A sequential pipeline applies the same
//! idea along a declared causal ordering, quantile-mapping numeric columns
//! and re-labeling transported compositions.

pub mod coupling;
pub mod dirichlet;
pub mod encoder;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod logratio;
pub mod pipeline;
pub mod quantile;
pub mod simplex;
pub mod special;
pub mod ternary;

pub use coupling::{
    cost_matrix, diamond_interpolate, dirichlet_cost, solve_coupling, CounterfactualMode,
    CouplingPlan,
};
pub use error::{Error, Result};
pub use gaussian::GaussianTransportMap;
pub use logratio::{LogRatioTransform, TransformKind};
pub use simplex::{closure, closure_with_epsilon, Composition, CompositionSample, GroupLabel};
