mod common;

use common::{max_abs_diff, shapley_oracle, tree_value_oracle};
use glshap::synth::{random_ensemble, random_tree, rng, TreeGenConfig};
use glshap::{
    efficiency_violation, explain_ensemble, explain_tree_dfs, explain_tree_dfs_with_state,
    explain_tree_direct, gauss_legendre_rule, BudgetPolicy, PathState, TreeModel, TreeNode,
};
use proptest::prelude::*;
use rand::Rng;

fn tree_config() -> impl Strategy<Value = (TreeGenConfig, u64)> {
    (
        1usize..=10,
        1usize..=7,
        1usize..=60,
        0.0f64..1.0,
        any::<u64>(),
    )
        .prop_map(|(d, depth, leaves, bias, seed)| {
            let mut cfg = TreeGenConfig::new(d, depth, leaves);
            cfg.deep_bias = bias;
            (cfg, seed)
        })
}

/// An instance that sometimes lands exactly on split thresholds.
fn instance<R: Rng>(tree: &TreeModel, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = (0..tree.feature_count())
        .map(|_| rng.random_range(-1.2..1.2))
        .collect();
    for node in tree.nodes() {
        if let TreeNode::Split {
            feature, threshold, ..
        } = *node
        {
            if rng.random_bool(0.2) {
                x[feature] = threshold;
            }
        }
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dfs_direct_and_oracle_agree((cfg, seed) in tree_config()) {
        let mut r = rng(seed);
        let tree = random_tree(&cfg, &mut r).unwrap();
        let x = instance(&tree, &mut r);
        let rule = gauss_legendre_rule(tree.exact_budget()).unwrap();
        let dfs = explain_tree_dfs(&tree, &x, &rule).unwrap();
        let direct = explain_tree_direct(&tree, &x, &rule).unwrap();
        let oracle = shapley_oracle(cfg.features, |s| tree_value_oracle(&tree, &x, s));
        prop_assert!(dfs.exact && direct.exact);
        prop_assert!(max_abs_diff(&dfs.phi, &oracle) <= 1e-10);
        prop_assert!(max_abs_diff(&direct.phi, &oracle) <= 1e-10);
    }

    #[test]
    fn dfs_and_direct_agree_below_exact_budget((cfg, seed) in tree_config(), m in 1usize..=3) {
        let mut r = rng(seed);
        let tree = random_tree(&cfg, &mut r).unwrap();
        let x = instance(&tree, &mut r);
        let rule = gauss_legendre_rule(m).unwrap();
        let dfs = explain_tree_dfs(&tree, &x, &rule).unwrap().phi;
        let direct = explain_tree_direct(&tree, &x, &rule).unwrap().phi;
        prop_assert!(max_abs_diff(&dfs, &direct) <= 1e-10);
    }

    #[test]
    fn path_state_returns_to_initial((cfg, seed) in tree_config(), extra in 0usize..3) {
        let mut r = rng(seed);
        let tree = random_tree(&cfg, &mut r).unwrap();
        let x = instance(&tree, &mut r);
        let rule = gauss_legendre_rule(tree.exact_budget() + extra).unwrap();
        let initial = PathState::new(cfg.features, rule.order());
        let mut state = initial.clone();
        let first = explain_tree_dfs_with_state(&tree, &x, &rule, &mut state).unwrap();
        prop_assert_eq!(state.fingerprint(), initial.fingerprint());
        // The restored state can be reused and gives the same answer.
        let second = explain_tree_dfs_with_state(&tree, &x, &rule, &mut state).unwrap();
        prop_assert_eq!(first, second);
        prop_assert_eq!(state.fingerprint(), initial.fingerprint());
    }

    #[test]
    fn unused_features_get_exact_zero(
        (cfg, seed) in tree_config(),
        padding in 0usize..20,
        m in 1usize..=6,
    ) {
        let mut r = rng(seed);
        let small = random_tree(&cfg, &mut r).unwrap();
        let d = cfg.features + padding;
        let tree = TreeModel::new(small.nodes().to_vec(), small.root(), d).unwrap();
        let mut used = vec![false; d];
        for node in tree.nodes() {
            if let TreeNode::Split { feature, .. } = node {
                used[*feature] = true;
            }
        }
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.2..1.2)).collect();
        let rule = gauss_legendre_rule(m).unwrap();
        for phi in [
            explain_tree_dfs(&tree, &x, &rule).unwrap().phi,
            explain_tree_direct(&tree, &x, &rule).unwrap().phi,
        ] {
            for j in (0..d).filter(|&j| !used[j]) {
                prop_assert_eq!(phi[j].to_bits(), 0.0f64.to_bits(), "feature {}", j);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ensemble_efficiency(
        d in 1usize..=20,
        depth in 1usize..=12,
        leaves in 1usize..=100,
        trees in 1usize..=10,
        seed in any::<u64>(),
    ) {
        let cfg = TreeGenConfig::new(d, depth, leaves);
        let ensemble = random_ensemble(&cfg, trees, seed).unwrap();
        let mut r = rng(seed ^ 1);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.2..1.2)).collect();
        let att = explain_ensemble(&ensemble, &x, BudgetPolicy::Exact).unwrap();
        prop_assert!(att.exact);
        prop_assert!(efficiency_violation(ensemble.trees(), &x, &att.phi) <= 1e-9);
    }

    /// Long left spines with small left fractions drive the path factors
    /// `Π 1/p` far beyond the double range; the result must stay exact.
    #[test]
    fn deep_small_fraction_spines(depth in 300usize..=500, seed in any::<u64>()) {
        let mut cfg = TreeGenConfig::new(2, depth, depth);
        cfg.deep_bias = 1.0;
        cfg.p_range = (0.001, 0.005);
        let tree = random_tree(&cfg, &mut rng(seed)).unwrap();
        let x = [-2.0, -2.0];
        // ln of the largest path factor along the all-left spine.
        let mut log_q = [0.0f64; 2];
        let mut id = tree.root();
        while let TreeNode::Split { feature, left, left_fraction, .. } = tree.nodes()[id] {
            log_q[feature] -= left_fraction.ln();
            id = left;
        }
        prop_assert!(log_q.iter().any(|&l| l > f64::MAX.ln()), "{:?}", log_q);

        let rule = gauss_legendre_rule(tree.exact_budget()).unwrap();
        let phi = explain_tree_dfs(&tree, &x, &rule).unwrap().phi;
        prop_assert!(phi.iter().all(|p| p.is_finite()));
        prop_assert!(efficiency_violation(std::slice::from_ref(&tree), &x, &phi) <= 1e-9);
        let oracle = shapley_oracle(2, |s| tree_value_oracle(&tree, &x, s));
        prop_assert!(max_abs_diff(&phi, &oracle) <= 1e-9);
    }
}
