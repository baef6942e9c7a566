//! Path-dependent Shapley values for decision trees and ensembles.
//!
//! Under the extended tree model a coalition `S` resolves splits on features
//! in `S` according to `x` and averages the others with the branch fractions
//! `p_e`:
//!
//! ```text
//! v(S) = Σ_ℓ ν_ℓ (Π_{e∈path(ℓ)} p_e) Π_{j∈S} q_{j,ℓ}(x),
//! q_{j,ℓ}(x) = Π_{e∈path(ℓ), κ(e)=j} c_e(x),   c_e(x) = 1/p_e if x follows e, else 0.
//! ```
//!
//! Each leaf is a product game over the distinct features on its path, so
//! the quadrature estimator applies leaf by leaf ([`explain_tree_direct`]).
//! [`explain_tree_dfs`] telescopes the per-leaf sums onto edges and computes
//! the same vector in a single depth-first pass with `O(m·|leaves|)` work.
//!
//! An instance follows the left edge when `x[feature] <= threshold`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{check_finite, Error, Result};
use crate::game::{shapley_quadrature, Attribution, ProductGame};
use crate::quadrature::{gauss_legendre_rule, QuadratureRule};

/// One node of a binary decision tree.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Fraction of training mass routed left, in `(0, 1)`.
        left_fraction: f64,
    },
    Leaf {
        value: f64,
    },
}

/// Which child an edge leads to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// The edge from split node `parent` to its `side` child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub parent: usize,
    pub side: Side,
}

/// Effective path dimension `η` (distinct split features on a root-to-leaf
/// path, maximized over leaves) and depth `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathDimension {
    pub eta: usize,
    pub depth: usize,
}

/// A validated binary decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
    root: usize,
    feature_count: usize,
    shape: PathDimension,
    leaf_count: usize,
}

impl TreeModel {
    /// Checks that `nodes` form a rooted binary tree over `feature_count`
    /// features with every node reachable from `root`.
    pub fn new(nodes: Vec<TreeNode>, root: usize, feature_count: usize) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidModel(msg));
        if feature_count == 0 {
            return invalid("feature_count must be positive".into());
        }
        if root >= nodes.len() {
            return invalid(format!(
                "root {root} out of range for {} nodes",
                nodes.len()
            ));
        }
        let mut parent_seen = vec![false; nodes.len()];
        parent_seen[root] = true;
        for (id, node) in nodes.iter().enumerate() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    left_fraction,
                } => {
                    if feature >= feature_count {
                        return invalid(format!(
                            "node {id} splits on feature {feature} but feature_count is {feature_count}"
                        ));
                    }
                    if threshold.is_nan() {
                        return invalid(format!("node {id} has a NaN threshold"));
                    }
                    if !(left_fraction > 0.0 && left_fraction < 1.0) {
                        return invalid(format!(
                            "node {id} has left_fraction {left_fraction} outside (0, 1)"
                        ));
                    }
                    for child in [left, right] {
                        if child >= nodes.len() {
                            return invalid(format!("node {id} points to missing node {child}"));
                        }
                        if parent_seen[child] {
                            return invalid(format!(
                                "node {child} has more than one parent or is the root"
                            ));
                        }
                        parent_seen[child] = true;
                    }
                }
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return invalid(format!("leaf {id} has non-finite value"));
                    }
                }
            }
        }

        // Every node has at most one parent, so a walk from the root cannot
        // revisit a node; counting what it reaches detects orphans and cycles.
        let mut reached = 0usize;
        let mut leaf_count = 0usize;
        let mut shape = PathDimension { eta: 0, depth: 0 };
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(root, 0, None)];
        // (node, depth, feature added on the edge into this node)
        let mut trail: Vec<Option<usize>> = Vec::new();
        let mut depth_trail: Vec<usize> = Vec::new();
        while let Some((id, depth, added)) = stack.pop() {
            while depth_trail.last().is_some_and(|&d| d >= depth) {
                depth_trail.pop();
                if let Some(f) = trail.pop().flatten() {
                    let c = counts.get_mut(&f).expect("tracked feature");
                    *c -= 1;
                    if *c == 0 {
                        counts.remove(&f);
                    }
                }
            }
            if let Some(f) = added {
                *counts.entry(f).or_default() += 1;
            }
            trail.push(added);
            depth_trail.push(depth);
            reached += 1;
            if reached > nodes.len() {
                return invalid("tree contains a cycle".into());
            }
            match nodes[id] {
                TreeNode::Leaf { .. } => {
                    leaf_count += 1;
                    shape.eta = shape.eta.max(counts.len());
                    shape.depth = shape.depth.max(depth);
                }
                TreeNode::Split {
                    feature,
                    left,
                    right,
                    ..
                } => {
                    stack.push((right, depth + 1, Some(feature)));
                    stack.push((left, depth + 1, Some(feature)));
                }
            }
        }
        if reached != nodes.len() {
            return invalid(format!(
                "{} of {} nodes are unreachable from the root",
                nodes.len() - reached,
                nodes.len()
            ));
        }
        Ok(Self {
            nodes,
            root,
            feature_count,
            shape,
            leaf_count,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// `η` and `h`, computed at construction.
    pub fn path_dimension(&self) -> PathDimension {
        self.shape
    }

    /// Raw prediction `f(x)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if goes_left(x[feature], threshold) {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    /// Rule order that makes the estimator exact for every leaf.
    pub fn exact_budget(&self) -> usize {
        self.shape.eta.div_ceil(2).max(1)
    }

    fn check_instance(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: x.len(),
            });
        }
        check_finite(x)
    }

    fn split(&self, id: usize) -> Option<(usize, f64, usize, usize, f64)> {
        match self.nodes[id] {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                left_fraction,
            } => Some((feature, threshold, left, right, left_fraction)),
            TreeNode::Leaf { .. } => None,
        }
    }
}

#[inline]
fn goes_left(value: f64, threshold: f64) -> bool {
    value <= threshold
}

/// `c_e(x)`: `1/p_e` if `x` follows the edge, else 0.
pub fn edge_factor(tree: &TreeModel, edge: Edge, x: &[f64]) -> f64 {
    let (feature, threshold, _, _, left_fraction) =
        tree.split(edge.parent).expect("edges start at split nodes");
    let left = goes_left(x[feature], threshold);
    match (edge.side, left) {
        (Side::Left, true) => 1.0 / left_fraction,
        (Side::Right, false) => 1.0 / (1.0 - left_fraction),
        _ => 0.0,
    }
}

fn edge_probability(left_fraction: f64, side: Side) -> f64 {
    match side {
        Side::Left => left_fraction,
        Side::Right => 1.0 - left_fraction,
    }
}

/// Root-to-leaf path summary: `ν_ℓ`, `Π p_e`, and `q_{j,ℓ}` for each feature
/// on the path.
struct LeafPath {
    value: f64,
    reach: f64,
    log_reach: f64,
    factors: Vec<(usize, f64)>,
    /// `ln q_{j,ℓ}`, aligned with `factors`.
    log_factors: Vec<f64>,
}

/// `(feature, p_e, c_e)` for one edge.
type PathEdge = (usize, f64, f64);

fn for_each_leaf_path<F: FnMut(&LeafPath)>(tree: &TreeModel, x: &[f64], mut visit: F) {
    // Edges on the current path.
    let mut path: Vec<PathEdge> = Vec::new();
    let mut stack: Vec<(usize, usize, Option<PathEdge>)> = vec![(tree.root, 0, None)];
    while let Some((id, depth, edge)) = stack.pop() {
        path.truncate(depth.saturating_sub(1));
        if let Some(e) = edge {
            path.push(e);
        }
        match tree.nodes[id] {
            TreeNode::Leaf { value } => {
                let mut factors: Vec<(usize, f64)> = Vec::new();
                let mut log_factors: Vec<f64> = Vec::new();
                let mut reach = 1.0;
                let mut log_reach = 0.0;
                for &(j, p, c) in &path {
                    reach *= p;
                    log_reach += p.ln();
                    match factors.iter().position(|(f, _)| *f == j) {
                        Some(k) => {
                            factors[k].1 *= c;
                            log_factors[k] += c.ln();
                        }
                        None => {
                            factors.push((j, c));
                            log_factors.push(c.ln());
                        }
                    }
                }
                visit(&LeafPath {
                    value,
                    reach,
                    log_reach,
                    factors,
                    log_factors,
                });
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                left_fraction,
            } => {
                let left_taken = goes_left(x[feature], threshold);
                let pl = left_fraction;
                let pr = 1.0 - left_fraction;
                let cl = if left_taken { 1.0 / pl } else { 0.0 };
                let cr = if left_taken { 0.0 } else { 1.0 / pr };
                stack.push((right, depth + 1, Some((feature, pr, cr))));
                stack.push((left, depth + 1, Some((feature, pl, cl))));
            }
        }
    }
}

/// `v(S) = Σ_ℓ ν_ℓ (Π p_e) Π_{j∈S} q_{j,ℓ}(x)`.
///
/// `subset[j]` marks membership of feature `j`.
pub fn tree_value(tree: &TreeModel, x: &[f64], subset: &[bool]) -> f64 {
    let mut total = 0.0;
    for_each_leaf_path(tree, x, |leaf| {
        let present = || {
            leaf.factors
                .iter()
                .zip(&leaf.log_factors)
                .filter(|((j, _), _)| subset[*j])
        };
        let q: f64 = present().map(|((_, q), _)| q).product();
        let mass = leaf.reach * q;
        if mass.is_finite() && (leaf.reach > 0.0 || q == 0.0) {
            total += leaf.value * mass;
        } else if present().all(|((_, q), _)| *q > 0.0) {
            // Underflowed reach or overflowed path factors.
            let log_q: f64 = present().map(|(_, l)| l).sum();
            total += leaf.value * (leaf.log_reach + log_q).exp();
        }
    });
    total
}

/// `η` and depth of `tree`.
pub fn effective_path_dimension(tree: &TreeModel) -> PathDimension {
    tree.path_dimension()
}

/// Leaf-by-leaf quadrature: each leaf's product game over its path features
/// is solved with the log-space product-game estimator and scaled by
/// `ν_ℓ Π p_e`. Work is `O(m · |leaves| · η)`. A path factor beyond the
/// double range is reported as non-finite; [`explain_tree_dfs`] covers it.
pub fn explain_tree_direct(
    tree: &TreeModel,
    x: &[f64],
    rule: &QuadratureRule,
) -> Result<Attribution> {
    tree.check_instance(x)?;
    let mut phi = vec![0.0; tree.feature_count];
    let mut failure = None;
    for_each_leaf_path(tree, x, |leaf| {
        if leaf.factors.is_empty() || failure.is_some() {
            return;
        }
        let weight = leaf.value * leaf.reach;
        let game = ProductGame::new(leaf.factors.iter().map(|&(_, q)| q).collect());
        match game.and_then(|g| shapley_quadrature(&g, rule)) {
            Ok(local) => {
                for (&(j, _), v) in leaf.factors.iter().zip(&local.phi) {
                    phi[j] += weight * v;
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Attribution {
        phi,
        budget: rule.order(),
        exact: rule.order() >= tree.shape.eta.div_ceil(2),
    })
}

// Below this magnitude path factors are handled in the linear domain; beyond
// it (or once they overflow) their logarithms are used instead.
const LINEAR_LIMIT: f64 = 1e300;

/// Quadrature constants for the DFS, per node `r`.
struct RuleTables<'a> {
    rule: &'a QuadratureRule,
    ln_tau: Vec<f64>,
    ln_comp: Vec<f64>,
}

impl<'a> RuleTables<'a> {
    fn new(rule: &'a QuadratureRule) -> Self {
        let m = rule.order();
        Self {
            rule,
            ln_tau: rule.nodes().iter().map(|t| t.ln()).collect(),
            ln_comp: (0..m).map(|r| rule.complement(r).ln()).collect(),
        }
    }

    /// `ln a_r(q)` with `q` given by its log (`-∞` for zero).
    #[inline]
    fn ln_a(&self, r: usize, lq: f64) -> f64 {
        let lc = self.ln_comp[r];
        if lq == f64::NEG_INFINITY {
            return lc;
        }
        let lt = self.ln_tau[r] + lq;
        let (hi, lo) = if lt > lc { (lt, lc) } else { (lc, lt) };
        hi + (lo - hi).exp().ln_1p()
    }

    /// `a_r(q_new) / a_r(q_old)` and `s_r(q_new) - s_r(q_old)`.
    #[inline]
    fn ratio_and_delta(&self, r: usize, old: PathFactor, new: PathFactor) -> (f64, f64) {
        if old.linear <= LINEAR_LIMIT && new.linear <= LINEAR_LIMIT {
            let tau = self.rule.nodes()[r];
            let comp = self.rule.complement(r);
            let a_old = comp + tau * old.linear;
            let a_new = comp + tau * new.linear;
            let s_old = (old.linear - 1.0) / a_old;
            let s_new = (new.linear - 1.0) / a_new;
            (a_new / a_old, s_new - s_old)
        } else {
            let la_old = self.ln_a(r, old.log);
            let la_new = self.ln_a(r, new.log);
            let s = |lq: f64, la: f64| (lq - la).exp() - (-la).exp();
            (
                (la_new - la_old).exp(),
                s(new.log, la_new) - s(old.log, la_old),
            )
        }
    }
}

/// Path factor `q_j` kept both directly and as a logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PathFactor {
    linear: f64,
    log: f64,
}

impl PathFactor {
    const ONE: Self = Self {
        linear: 1.0,
        log: 0.0,
    };

    fn times_edge(self, followed: bool, p: f64) -> Self {
        if followed {
            Self {
                linear: self.linear / p,
                log: self.log - p.ln(),
            }
        } else {
            Self {
                linear: 0.0,
                log: f64::NEG_INFINITY,
            }
        }
    }
}

/// Traversal state: per-feature path factors `q_j` and running products
/// `B_r = (Π p_e) Π_j a_r(q_j)` along the current root-to-node path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    q: Vec<PathFactor>,
    b: Vec<f64>,
}

impl PathState {
    pub fn new(feature_count: usize, order: usize) -> Self {
        Self {
            q: vec![PathFactor::ONE; feature_count],
            b: vec![1.0; order],
        }
    }

    /// Bit patterns of every stored quantity.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.q
            .iter()
            .flat_map(|f| [f.linear.to_bits(), f.log.to_bits()])
            .chain(self.b.iter().map(|b| b.to_bits()))
            .collect()
    }
}

/// Undo record for one descended edge.
struct EdgeRecord {
    feature: usize,
    old: PathFactor,
    new: PathFactor,
    /// Offset of the saved `B` vector in the save stack.
    saved: usize,
}

struct Frame {
    node: usize,
    next: u8,
    /// Offset of this subtree's `H` accumulator.
    h: usize,
}

/// Single-pass telescoping traversal. On every edge `e` splitting on `j`
/// the running products are rescaled by `p_e a_r(q⁺)/a_r(q⁻)`; when the
/// subtree below returns its leaf mass `H_e(r)`, `φ_j` gains
/// `Σ_r ω_r H_e(r) (s_r(q⁺) - s_r(q⁻))`. `B` is restored from a saved copy
/// on backtrack, so the state after the pass equals the initial state bit
/// for bit. Work is `O(m · |nodes|)`, memory `O(m · h + d)`.
pub fn explain_tree_dfs(tree: &TreeModel, x: &[f64], rule: &QuadratureRule) -> Result<Attribution> {
    tree.check_instance(x)?;
    let mut state = PathState::new(tree.feature_count, rule.order());
    let phi = dfs_with_state(tree, x, rule, &mut state);
    Ok(Attribution {
        phi,
        budget: rule.order(),
        exact: rule.order() >= tree.shape.eta.div_ceil(2),
    })
}

/// [`explain_tree_dfs`] running on a caller-owned state, which must be in
/// its initial configuration and is returned to it.
pub fn explain_tree_dfs_with_state(
    tree: &TreeModel,
    x: &[f64],
    rule: &QuadratureRule,
    state: &mut PathState,
) -> Result<Attribution> {
    tree.check_instance(x)?;
    if *state != PathState::new(tree.feature_count, rule.order()) {
        return Err(Error::InvalidInput(
            "path state does not match the tree and rule, or is not initial".into(),
        ));
    }
    let phi = dfs_with_state(tree, x, rule, state);
    Ok(Attribution {
        phi,
        budget: rule.order(),
        exact: rule.order() >= tree.shape.eta.div_ceil(2),
    })
}

fn dfs_with_state(
    tree: &TreeModel,
    x: &[f64],
    rule: &QuadratureRule,
    state: &mut PathState,
) -> Vec<f64> {
    let m = rule.order();
    let tables = RuleTables::new(rule);
    let weights = rule.weights();
    let mut phi = vec![0.0; tree.feature_count];
    if tree.split(tree.root).is_none() {
        return phi;
    }

    let mut frames = vec![Frame {
        node: tree.root,
        next: 0,
        h: 0,
    }];
    let mut h_arena: Vec<f64> = vec![0.0; m];
    let mut saved_b: Vec<f64> = Vec::new();
    let mut edges: Vec<EdgeRecord> = Vec::new();
    let mut delta = vec![0.0; m];

    // Finishes the edge on top of `edges`, given the leaf mass below it.
    // `child_h` is `None` for a leaf child, whose mass is `ν B`.
    let finish_edge = |state: &mut PathState,
                       phi: &mut [f64],
                       edges: &mut Vec<EdgeRecord>,
                       saved_b: &mut Vec<f64>,
                       parent_h: &mut [f64],
                       child: Result<&[f64], f64>,
                       delta: &[f64]| {
        let rec = edges.pop().expect("edge on stack");
        let mut contribution = 0.0;
        for r in 0..m {
            let h = match child {
                Ok(h) => h[r],
                Err(value) => value * state.b[r],
            };
            contribution += weights[r] * h * delta[r];
            parent_h[r] += h;
        }
        phi[rec.feature] += contribution;
        state.q[rec.feature] = rec.old;
        state.b.copy_from_slice(&saved_b[rec.saved..rec.saved + m]);
        saved_b.truncate(rec.saved);
    };

    while let Some(top) = frames.last_mut() {
        let (feature, threshold, left, right, left_fraction) =
            tree.split(top.node).expect("frames hold split nodes");
        if top.next == 2 {
            let done = frames.pop().expect("non-empty");
            let Some(parent) = frames.last() else {
                break;
            };
            let (head, tail) = h_arena.split_at_mut(done.h);
            let parent_h = &mut head[parent.h..parent.h + m];
            let rec = edges.last().expect("edge into finished frame");
            for (r, dl) in delta.iter_mut().enumerate() {
                *dl = tables.ratio_and_delta(r, rec.old, rec.new).1;
            }
            finish_edge(
                state,
                &mut phi,
                &mut edges,
                &mut saved_b,
                parent_h,
                Ok(&tail[..m]),
                &delta,
            );
            h_arena.truncate(done.h);
            continue;
        }

        let side = if top.next == 0 {
            Side::Left
        } else {
            Side::Right
        };
        top.next += 1;
        let parent_h_off = top.h;
        let child = if side == Side::Left { left } else { right };
        let p = edge_probability(left_fraction, side);
        let followed = goes_left(x[feature], threshold) == (side == Side::Left);

        // Descend.
        let old = state.q[feature];
        let new = old.times_edge(followed, p);
        let saved = saved_b.len();
        saved_b.extend_from_slice(&state.b);
        for (r, (dl, b)) in delta.iter_mut().zip(state.b.iter_mut()).enumerate() {
            let (ra, d) = tables.ratio_and_delta(r, old, new);
            *dl = d;
            *b *= p * ra;
        }
        state.q[feature] = new;
        edges.push(EdgeRecord {
            feature,
            old,
            new,
            saved,
        });

        match tree.nodes[child] {
            TreeNode::Leaf { value } => {
                let parent_h = &mut h_arena[parent_h_off..parent_h_off + m];
                finish_edge(
                    state,
                    &mut phi,
                    &mut edges,
                    &mut saved_b,
                    parent_h,
                    Err(value),
                    &delta,
                );
            }
            TreeNode::Split { .. } => {
                let h = h_arena.len();
                h_arena.resize(h + m, 0.0);
                frames.push(Frame {
                    node: child,
                    next: 0,
                    h,
                });
            }
        }
    }
    phi
}

/// A collection of trees over a shared feature space whose predictions add.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    feature_count: usize,
    trees: Vec<TreeModel>,
}

impl TreeEnsemble {
    pub fn new(feature_count: usize, trees: Vec<TreeModel>) -> Result<Self> {
        if let Some(t) = trees.iter().find(|t| t.feature_count != feature_count) {
            return Err(Error::DimensionMismatch {
                expected: feature_count,
                found: t.feature_count,
            });
        }
        Ok(Self {
            feature_count,
            trees,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(TreeModel::leaf_count).sum()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum()
    }
}

/// How each tree's quadrature order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetPolicy {
    /// `⌈η/2⌉` per tree.
    Exact,
    /// The same order for every tree.
    Fixed(usize),
    /// `min(⌈η/2⌉, cap)` per tree.
    Capped(usize),
}

impl BudgetPolicy {
    fn order_for(self, tree: &TreeModel) -> usize {
        match self {
            Self::Exact => tree.exact_budget(),
            Self::Fixed(m) => m,
            Self::Capped(cap) => tree.exact_budget().min(cap),
        }
    }
}

const TREE_BATCH: usize = 64;

/// Sum of per-tree DFS attributions, reduced in ascending tree order.
///
/// The reported budget is the largest order used; `exact` holds when every
/// tree was explained in its exact regime.
pub fn explain_ensemble(
    ensemble: &TreeEnsemble,
    x: &[f64],
    policy: BudgetPolicy,
) -> Result<Attribution> {
    if x.len() != ensemble.feature_count {
        return Err(Error::DimensionMismatch {
            expected: ensemble.feature_count,
            found: x.len(),
        });
    }
    check_finite(x)?;
    let mut total = Attribution::zeros(ensemble.feature_count, 0, true);
    for batch in ensemble.trees.chunks(TREE_BATCH) {
        let parts: Vec<Attribution> = batch
            .par_iter()
            .map(|tree| {
                let rule = gauss_legendre_rule(policy.order_for(tree))?;
                explain_tree_dfs(tree, x, &rule)
            })
            .collect::<Result<_>>()?;
        for part in parts {
            for (acc, v) in total.phi.iter_mut().zip(&part.phi) {
                *acc += v;
            }
            total.budget = total.budget.max(part.budget);
            total.exact &= part.exact;
        }
    }
    Ok(total)
}

/// `|E[f] + Σ φ - f(x)|` with `E[f] = Σ_t v_t(∅)` and `f(x) = Σ_t v_t(D)`.
pub fn efficiency_violation(trees: &[TreeModel], x: &[f64], phi: &[f64]) -> f64 {
    let (expected, prediction) = trees.iter().fold((0.0, 0.0), |(e, f), t| {
        let d = t.feature_count;
        (
            e + tree_value(t, x, &vec![false; d]),
            f + tree_value(t, x, &vec![true; d]),
        )
    });
    (expected + phi.iter().sum::<f64>() - prediction).abs()
}
