//! Reference implementations used only by the integration tests. They share
//! no code with the library: coalition values are evaluated from first
//! principles and Shapley values come from the marginal-contribution sum with
//! factorial weights.
#![allow(dead_code)]

use glshap::{KernelSpec, ProductKernelModel, TreeModel, TreeNode};

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `φ_i = Σ_{S ⊆ N∖{i}} |S|!(d-|S|-1)!/d! · (v(S ∪ {i}) - v(S))`.
pub fn shapley_oracle(d: usize, v: impl Fn(&[bool]) -> f64) -> Vec<f64> {
    assert!(d <= 20, "oracle limited to 20 players");
    let values: Vec<f64> = (0..1u32 << d)
        .map(|mask| v(&mask_to_set(mask, d)))
        .collect();
    let weights: Vec<f64> = (0..d)
        .map(|s| factorial(s) * factorial(d - s - 1) / factorial(d))
        .collect();
    (0..d)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << d)
                .filter(|m| m & bit == 0)
                .map(|m| {
                    weights[m.count_ones() as usize]
                        * (values[(m | bit) as usize] - values[m as usize])
                })
                .sum()
        })
        .collect()
}

pub fn mask_to_set(mask: u32, d: usize) -> Vec<bool> {
    (0..d).map(|j| mask & (1 << j) != 0).collect()
}

pub fn product_value(u: &[f64], s: &[bool]) -> f64 {
    u.iter()
        .zip(s)
        .filter(|(_, &m)| m)
        .map(|(x, _)| x)
        .product()
}

/// Extended-model value: present features route by `x` (ties go left),
/// absent features average both branches by their training fractions.
pub fn tree_value_oracle(tree: &TreeModel, x: &[f64], s: &[bool]) -> f64 {
    fn walk(nodes: &[TreeNode], id: usize, x: &[f64], s: &[bool]) -> f64 {
        match nodes[id] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                left_fraction,
            } => {
                if s[feature] {
                    let next = if x[feature] <= threshold { left } else { right };
                    walk(nodes, next, x, s)
                } else {
                    left_fraction * walk(nodes, left, x, s)
                        + (1.0 - left_fraction) * walk(nodes, right, x, s)
                }
            }
        }
    }
    walk(tree.nodes(), tree.root(), x, s)
}

/// `Σ_i α_i Π_{j∈S} k_j(x_j, z_ij)` for rbf or laplace kernels.
pub fn kernel_value_oracle(model: &ProductKernelModel, x: &[f64], s: &[bool]) -> f64 {
    let k = |j: usize, a: f64, b: f64| match model.kernel() {
        KernelSpec::Rbf { lengthscales } => {
            let l = lengthscales[j];
            (-(a - b).powi(2) / (2.0 * l * l)).exp()
        }
        KernelSpec::Laplace { lengthscales } => (-(a - b).abs() / lengthscales[j]).exp(),
        KernelSpec::Polynomial { degree, offset } => (offset + a * b).powi(*degree as i32),
    };
    (0..model.n_train())
        .map(|i| {
            let z = model.train_row(i);
            let prod: f64 = (0..x.len())
                .filter(|&j| s[j])
                .map(|j| k(j, x[j], z[j]))
                .product();
            model.alpha()[i] * prod
        })
        .sum()
}

/// `∫_0^1 t^a (1-t)^b dt = a! b! / (a+b+1)!`.
pub fn beta_integral(a: usize, b: usize) -> f64 {
    factorial(a) * factorial(b) / factorial(a + b + 1)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// An rbf model with standard-normal rows and coefficients and lengthscales
/// uniform in `[0.3, 3]`.
pub fn random_rbf_model<R: rand::Rng>(rng: &mut R, n: usize, d: usize) -> ProductKernelModel {
    use rand_distr::{Distribution, StandardNormal};
    let train: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let alpha = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let lengthscales = (0..d).map(|_| rng.random_range(0.3..3.0)).collect();
    ProductKernelModel::new(alpha, train, KernelSpec::Rbf { lengthscales }, 0.0).unwrap()
}

/// `φ_i = (u_i - 1) Σ_s μ(s) e_s(u_{-i})`: the brute-force sum grouped by
/// coalition size, with elementary symmetric polynomials built by dynamic
/// programming. Free of cancellation for positive factors.
pub fn product_shapley_by_size(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            let mut len = 0;
            for (j, &x) in u.iter().enumerate() {
                if j == i {
                    continue;
                }
                len += 1;
                for s in (1..=len).rev() {
                    e[s] += x * e[s - 1];
                }
            }
            (u[i] - 1.0)
                * (0..d)
                    .map(|s| e[s] * beta_integral(s, d - s - 1))
                    .sum::<f64>()
        })
        .collect()
}
