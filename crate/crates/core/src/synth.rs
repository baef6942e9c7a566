//! Seeded synthetic models and instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{kernel_factor, KernelSpec, ProductKernelModel};
use crate::tree::{TreeEnsemble, TreeModel, TreeNode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary tree parameters.
#[derive(Debug, Clone, Serialize)]
pub struct TreeGenConfig {
    pub features: usize,
    pub max_depth: usize,
    pub leaves: usize,
    /// Probability of splitting the newest leaf instead of a uniform pick;
    /// values near 1 grow long paths.
    pub deep_bias: f64,
    pub p_range: (f64, f64),
    pub value_range: (f64, f64),
}

impl TreeGenConfig {
    pub fn new(features: usize, max_depth: usize, leaves: usize) -> Self {
        Self {
            features,
            max_depth,
            leaves,
            deep_bias: 0.0,
            p_range: (0.1, 0.9),
            value_range: (-10.0, 10.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.features == 0 || self.leaves == 0 {
            return Err(Error::InvalidInput(
                "tree generator needs features and leaves".into(),
            ));
        }
        let (lo, hi) = self.p_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidInput(
                "split fractions must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Grows a tree by repeatedly splitting an expandable leaf until `leaves`
/// is reached or every leaf sits at `max_depth`.
pub fn random_tree<R: Rng>(config: &TreeGenConfig, rng: &mut R) -> Result<TreeModel> {
    config.validate()?;
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut open: Vec<(usize, usize)> = if config.max_depth > 0 {
        vec![(0, 0)]
    } else {
        vec![]
    };
    let mut leaves = 1;
    while leaves < config.leaves && !open.is_empty() {
        let pick = if rng.random::<f64>() < config.deep_bias {
            open.len() - 1
        } else {
            rng.random_range(0..open.len())
        };
        let (id, depth) = open.remove(pick);
        let left = nodes.len();
        nodes[id] = TreeNode::Split {
            feature: rng.random_range(0..config.features),
            threshold: rng.random_range(-1.0..1.0),
            left,
            right: left + 1,
            left_fraction: uniform(rng, config.p_range),
        };
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes.push(TreeNode::Leaf { value: 0.0 });
        if depth + 1 < config.max_depth {
            open.push((left + 1, depth + 1));
            open.push((left, depth + 1));
        }
        leaves += 1;
    }
    for node in &mut nodes {
        if let TreeNode::Leaf { value } = node {
            *value = uniform(rng, config.value_range);
        }
    }
    TreeModel::new(nodes, 0, config.features)
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// `trees` random trees sharing one configuration.
pub fn random_ensemble(config: &TreeGenConfig, trees: usize, seed: u64) -> Result<TreeEnsemble> {
    let mut rng = rng(seed);
    let trees = (0..trees)
        .map(|_| random_tree(config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    TreeEnsemble::new(config.features, trees)
}

/// `rows × d` instances drawn uniformly from `[lo, hi)`.
pub fn random_instances(rows: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    (0..rows)
        .map(|_| (0..d).map(|_| uniform(&mut rng, (lo, hi))).collect())
        .collect()
}

/// Standard-normal `rows × d` matrix.
pub fn normal_matrix<R: Rng>(rows: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Random rbf model parameters.
#[derive(Debug, Clone, Serialize)]
pub struct KernelGenConfig {
    pub n_train: usize,
    pub features: usize,
    /// Lengthscales are drawn uniformly from this range, scaled by `√d`.
    pub lengthscale_range: (f64, f64),
    pub intercept: f64,
}

impl KernelGenConfig {
    pub fn new(n_train: usize, features: usize) -> Self {
        Self {
            n_train,
            features,
            lengthscale_range: (0.5, 1.5),
            intercept: 0.0,
        }
    }
}

/// An rbf model with standard-normal training rows and coefficients.
pub fn random_kernel_model(config: &KernelGenConfig, seed: u64) -> Result<ProductKernelModel> {
    let mut rng = rng(seed);
    let d = config.features;
    let train = normal_matrix(config.n_train, d, &mut rng);
    let alpha = (0..config.n_train)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = (d as f64).sqrt();
    let lengthscales = (0..d)
        .map(|_| scale * uniform(&mut rng, config.lengthscale_range))
        .collect();
    ProductKernelModel::new(
        alpha,
        train,
        KernelSpec::Rbf { lengthscales },
        config.intercept,
    )
}

/// A regression data set: standard-normal features, a linear target on the
/// first `max(1, d/4)` features with coefficients `100·U(0, 1)`, plus
/// `N(0, noise²)` noise. Columns are standardized.
pub fn regression_data<R: Rng>(
    rows: usize,
    d: usize,
    noise: f64,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let informative = (d / 4).max(1);
    let coef: Vec<f64> = (0..informative)
        .map(|_| 100.0 * rng.random::<f64>())
        .collect();
    let mut x = normal_matrix(rows, d, rng);
    let y = x
        .iter()
        .map(|row| {
            let e: f64 = StandardNormal.sample(rng);
            row.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>() + noise * e
        })
        .collect();
    standardize_columns(&mut x);
    (x, y)
}

fn standardize_columns(x: &mut [Vec<f64>]) {
    let n = x.len();
    if n < 2 {
        return;
    }
    for j in 0..x[0].len() {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in x.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }
}

/// Kernel ridge regression: solves `(K + ridge·I) α = y`.
pub fn fit_kernel_ridge(
    train: Vec<Vec<f64>>,
    y: &[f64],
    kernel: KernelSpec,
    ridge: f64,
) -> Result<ProductKernelModel> {
    let n = train.len();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if !(ridge.is_finite() && ridge > 0.0) {
        return Err(Error::InvalidInput("ridge must be positive".into()));
    }
    let gram = nalgebra::DMatrix::from_fn(n, n, |a, b| {
        let k: f64 = (0..train[a].len())
            .map(|j| kernel_factor(&kernel, j, train[a][j], train[b][j]))
            .product();
        k + if a == b { ridge } else { 0.0 }
    });
    let alpha = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("kernel matrix is not positive definite".into()))?
        .solve(&nalgebra::DVector::from_column_slice(y));
    ProductKernelModel::new(alpha.as_slice().to_vec(), train, kernel, 0.0)
}

/// A fitted rbf ridge model on [`regression_data`] with `γ = 1/d`, `ridge = 1`,
/// and `rows` held-out instances from the same distribution.
pub fn regression_kernel_model(
    n_train: usize,
    d: usize,
    rows: usize,
    seed: u64,
) -> Result<(ProductKernelModel, Vec<Vec<f64>>)> {
    let mut rng = rng(seed);
    let (mut x, y) = regression_data(n_train + rows, d, 0.1, &mut rng);
    let held_out = x.split_off(n_train);
    let kernel = KernelSpec::rbf_from_gamma(&vec![1.0 / d as f64; d])?;
    let model = fit_kernel_ridge(x, &y[..n_train], kernel, 1.0)?;
    Ok((model, held_out))
}
