//! Shapley-value attributions for product games.
//!
//! The Shapley vector of a game whose coalition values factor as
//! `v(S) = Π_{j∈S} u_j` is a one-dimensional polynomial integral, evaluated
//! here with Gauss-Legendre quadrature: exactly once the rule has `⌈d/2⌉`
//! nodes, and with geometrically shrinking error below that. Product-kernel
//! predictors and decision-tree ensembles reduce to weighted sums of such
//! games and are explained through the same core.
//!
//! ```
//! use glshap::{gauss_legendre_rule, shapley_quadrature, ProductGame};
//!
//! let game = ProductGame::new(vec![2.0, 3.0]).unwrap();
//! let rule = gauss_legendre_rule(1).unwrap();
//! let attribution = shapley_quadrature(&game, &rule).unwrap();
//! assert!((attribution.phi[0] - 2.0).abs() < 1e-14);
//! assert!((attribution.phi[1] - 3.0).abs() < 1e-14);
//! ```

pub mod error;
pub mod game;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod parallel;
pub mod quadrature;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
pub use game::{
    default_budget, efficiency_defect, shapley_bruteforce, shapley_bruteforce_fn,
    shapley_logspace_node, shapley_quadrature, shapley_weight, shapley_weighted_sum, Attribution,
    ProductGame, SignedLogProduct, BRUTE_FORCE_MAX_DIM, DEFAULT_BUDGET_CAP,
};
pub use harness::{
    default_budget_grid, run_bench, run_convergence, run_verify, BenchConfig, BenchRow,
    ConvergenceReport, ConvergenceTarget, Explainer, VerifyReport,
};
pub use kernel::{
    explain_kernel, kernel_factor, kernel_value, KernelExplanation, KernelSpec, ProductKernelModel,
};
pub use parallel::{reduce, reduce_map, ReductionPlan};
pub use quadrature::{
    gauss_legendre_rule, gauss_legendre_rule_uncached, gauss_legendre_rule_with_cap,
    monomial_exactness_defect, QuadratureRule, DEFAULT_ORDER_CAP,
};
pub use tree::{
    edge_factor, effective_path_dimension, efficiency_violation, explain_ensemble,
    explain_tree_dfs, explain_tree_dfs_with_state, explain_tree_direct, tree_value, BudgetPolicy,
    Edge, PathDimension, PathState, Side, TreeEnsemble, TreeModel, TreeNode,
};

/// Library version, echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
