//! Attributions for product-kernel predictors `f(x) = b + Σ_i α_i Π_j k_j(x_j, x_ij)`.
//!
//! Restricting the kernel to a coalition `S` gives
//! `v(S) = Σ_i α_i Π_{j∈S} k_j(x_j, x_ij)`, a weighted sum of one product game
//! per training row. The intercept `b` and `v(∅) = Σ α_i` are reported
//! together as the base value.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::game::{weighted_sum_with, Attribution, ProductGame};
use crate::quadrature::gauss_legendre_rule;

/// Per-feature kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-(a - b)² / (2 ℓ_j²))`
    Rbf { lengthscales: Vec<f64> },
    /// `exp(-|a - b| / ℓ_j)`
    Laplace { lengthscales: Vec<f64> },
    /// `(offset + a b)^degree` on every feature.
    #[serde(rename = "polynomial-per-dim", alias = "polynomial")]
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    /// RBF spec from the `exp(-γ (a - b)²)` parameterization.
    pub fn rbf_from_gamma(gammas: &[f64]) -> Result<Self> {
        if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "rbf gamma must be positive, got {g}"
            )));
        }
        Ok(Self::Rbf {
            lengthscales: gammas.iter().map(|g| (0.5 / g).sqrt()).collect(),
        })
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Self::Rbf { lengthscales } | Self::Laplace { lengthscales } => {
                if lengthscales.len() != d {
                    return Err(Error::InvalidModel(format!(
                        "kernel has {} lengthscales for {d} features",
                        lengthscales.len()
                    )));
                }
                if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
                    return Err(Error::InvalidModel(format!(
                        "lengthscales must be positive and finite, got {l}"
                    )));
                }
            }
            Self::Polynomial { offset, .. } => {
                if !offset.is_finite() {
                    return Err(Error::InvalidModel(
                        "polynomial offset must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `k_j(a, b)`.
#[inline]
pub fn kernel_factor(spec: &KernelSpec, j: usize, a: f64, b: f64) -> f64 {
    match spec {
        KernelSpec::Rbf { lengthscales } => {
            let l = lengthscales[j];
            let r = a - b;
            (-(r * r) / (2.0 * l * l)).exp()
        }
        KernelSpec::Laplace { lengthscales } => (-(a - b).abs() / lengthscales[j]).exp(),
        KernelSpec::Polynomial { degree, offset } => {
            (offset + a * b).powi(i32::try_from(*degree).unwrap_or(i32::MAX))
        }
    }
}

/// A fitted product-kernel predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernelModel {
    alpha: Vec<f64>,
    /// Row-major `n × d`.
    train: Vec<f64>,
    dim: usize,
    kernel: KernelSpec,
    intercept: f64,
}

impl ProductKernelModel {
    pub fn new(
        alpha: Vec<f64>,
        train: Vec<Vec<f64>>,
        kernel: KernelSpec,
        intercept: f64,
    ) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::InvalidModel(
                "kernel model has no training rows".into(),
            ));
        }
        if train.len() != n {
            return Err(Error::InvalidModel(format!(
                "{n} coefficients but {} training rows",
                train.len()
            )));
        }
        let dim = train[0].len();
        if dim == 0 {
            return Err(Error::InvalidModel("training rows have no features".into()));
        }
        if let Some((i, row)) = train.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::InvalidModel(format!(
                "training row {i} has {} features, expected {dim}",
                row.len()
            )));
        }
        check_finite(&alpha)?;
        if !intercept.is_finite() {
            return Err(Error::InvalidModel("intercept must be finite".into()));
        }
        kernel.validate(dim)?;
        let train: Vec<f64> = train.into_iter().flatten().collect();
        check_finite(&train)?;
        Ok(Self {
            alpha,
            train,
            dim,
            kernel,
            intercept,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_train(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn train_row(&self, i: usize) -> &[f64] {
        &self.train[i * self.dim..(i + 1) * self.dim]
    }

    /// `b + Σ_i α_i Π_j k_j(x_j, x_ij)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + kernel_value(self, x, &vec![true; self.dim])
    }

    /// `Σ_i α_i + b`, the prediction attributed to the empty coalition.
    pub fn base_value(&self) -> f64 {
        self.intercept + self.alpha.iter().sum::<f64>()
    }

    fn check_instance(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        check_finite(x)
    }
}

/// `v(S) = Σ_i α_i Π_{j∈S} k_j(x_j, x_ij)`; the intercept is not included.
pub fn kernel_value(model: &ProductKernelModel, x: &[f64], subset: &[bool]) -> f64 {
    (0..model.n_train())
        .map(|i| {
            let row = model.train_row(i);
            let k: f64 = (0..model.dim)
                .filter(|&j| subset[j])
                .map(|j| kernel_factor(&model.kernel, j, x[j], row[j]))
                .product();
            model.alpha[i] * k
        })
        .sum()
}

/// Shapley attribution plus the base value it is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelExplanation {
    #[serde(flatten)]
    pub attribution: Attribution,
    pub base_value: f64,
}

/// Shapley values of `v` at `x` using a rule of order `budget`.
///
/// `Σ φ + base_value` equals the prediction whenever the budget is exact.
pub fn explain_kernel(
    model: &ProductKernelModel,
    x: &[f64],
    budget: usize,
) -> Result<KernelExplanation> {
    model.check_instance(x)?;
    let rule = gauss_legendre_rule(budget)?;
    let attribution = weighted_sum_with(model.n_train(), model.dim, &rule, |i| {
        let row = model.train_row(i);
        let factors = (0..model.dim)
            .map(|j| kernel_factor(&model.kernel, j, x[j], row[j]))
            .collect();
        Ok((model.alpha[i], ProductGame::new(factors)?))
    })?;
    Ok(KernelExplanation {
        attribution,
        base_value: model.base_value(),
    })
}
