//! Shapley values of product games.
//!
//! A product game assigns `v(S) = Π_{j∈S} u_j` to every coalition `S`, with
//! `v(∅) = 1`. Its Shapley values are one-dimensional integrals of a
//! degree `d - 1` polynomial,
//!
//! ```text
//! φ_i = (u_i - 1) ∫₀¹ Π_{j≠i} ((1 - t) + t u_j) dt,
//! ```
//!
//! so an `m`-point Gauss-Legendre rule reproduces them exactly once
//! `m ≥ ⌈d/2⌉`, and converges geometrically below that.
//!
//! Per node the full product `P_q = Π_j T_{q,j}` is accumulated once in log
//! space with separate sign and zero bookkeeping; every leave-one-out
//! product is then `P_q / T_{q,i}`, taken as a difference of logs. Log
//! magnitudes are summed in 2^-96 fixed point, which makes the accumulation
//! exactly associative: the result does not depend on feature order or on
//! how the reduction is split across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::parallel::{reduce_map, ReductionPlan};
use crate::quadrature::QuadratureRule;

/// Largest game handled by [`shapley_bruteforce`].
pub const BRUTE_FORCE_MAX_DIM: usize = 25;

/// Largest game handled by the quadrature path. Each `|ln|T||` is below 745,
/// so the fixed-point accumulator cannot overflow under this bound.
pub const MAX_QUADRATURE_DIM: usize = 2_000_000;

/// Default upper bound on the quadrature budget.
pub const DEFAULT_BUDGET_CAP: usize = 400;

// Above this many node-feature pairs the work is spread over rayon.
const PAR_THRESHOLD: usize = 1 << 15;

const FIXED_SCALE: f64 = 79_228_162_514_264_337_593_543_950_336.0; // 2^96

/// Per-player multiplicative factors of a product game.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGame {
    factors: Vec<f64>,
}

impl ProductGame {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptyGame);
        }
        check_finite(&factors)?;
        Ok(Self { factors })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// `v(S)` for the coalition encoded by `members`.
    pub fn value(&self, members: &[bool]) -> f64 {
        self.factors
            .iter()
            .zip(members)
            .filter(|(_, &m)| m)
            .map(|(u, _)| u)
            .product()
    }
}

/// A Shapley vector together with the budget that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    /// Quadrature order; 0 for brute-force results.
    pub budget: usize,
    /// True when the budget reaches the exactness threshold.
    pub exact: bool,
}

impl Attribution {
    pub fn zeros(d: usize, budget: usize, exact: bool) -> Self {
        Self {
            phi: vec![0.0; d],
            budget,
            exact,
        }
    }

    pub fn total(&self) -> f64 {
        self.phi.iter().sum()
    }
}

/// `Π_j T_j` for one quadrature node, in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogProduct {
    /// `ln |Π T_j|` over the non-zero factors.
    pub log_magnitude: f64,
    /// `-1`, `0` or `+1`; zero whenever any factor is exactly zero.
    pub sign: i8,
    pub zero_count: usize,
    /// The vanishing factor when exactly one is zero.
    pub zero_index: Option<usize>,
}

/// Fixed-point accumulator behind [`SignedLogProduct`].
#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeProduct {
    log_fixed: i128,
    negative: bool,
    zero_count: usize,
    zero_index: Option<usize>,
}

impl NodeProduct {
    #[inline]
    fn leaf(j: usize, t: f64) -> Self {
        if t == 0.0 {
            Self {
                log_fixed: 0,
                negative: false,
                zero_count: 1,
                zero_index: Some(j),
            }
        } else {
            Self {
                log_fixed: to_fixed(t.abs().ln()),
                negative: t < 0.0,
                zero_count: 0,
                zero_index: None,
            }
        }
    }

    #[inline]
    fn combine(a: &Self, b: &Self) -> Self {
        let zero_count = a.zero_count + b.zero_count;
        Self {
            log_fixed: a.log_fixed + b.log_fixed,
            negative: a.negative != b.negative,
            zero_count,
            zero_index: if zero_count == 1 {
                a.zero_index.or(b.zero_index)
            } else {
                None
            },
        }
    }

    fn to_public(self) -> SignedLogProduct {
        let sign = if self.zero_count > 0 {
            0
        } else if self.negative {
            -1
        } else {
            1
        };
        SignedLogProduct {
            log_magnitude: from_fixed(self.log_fixed),
            sign,
            zero_count: self.zero_count,
            zero_index: self.zero_index,
        }
    }

    /// `ω Π_{j≠i} T_j` given `T_i`.
    #[inline]
    fn weighted_leave_one_out(&self, i: usize, t_i: f64, weight: f64) -> f64 {
        match self.zero_count {
            0 => {
                let log = from_fixed(self.log_fixed - to_fixed(t_i.abs().ln()));
                let negative = self.negative != (t_i < 0.0);
                let mag = scaled_exp(weight, log);
                if negative {
                    -mag
                } else {
                    mag
                }
            }
            1 if self.zero_index == Some(i) => {
                let mag = scaled_exp(weight, from_fixed(self.log_fixed));
                if self.negative {
                    -mag
                } else {
                    mag
                }
            }
            _ => 0.0,
        }
    }
}

/// `w e^x`, moving `w` into the exponent when `e^x` alone would overflow.
#[inline]
fn scaled_exp(w: f64, x: f64) -> f64 {
    if x < LN_MAX {
        w * x.exp()
    } else {
        (x + w.ln()).exp()
    }
}

const LN_MAX: f64 = 709.0;

#[inline]
fn to_fixed(x: f64) -> i128 {
    (x * FIXED_SCALE).round() as i128
}

#[inline]
fn from_fixed(x: i128) -> f64 {
    x as f64 / FIXED_SCALE
}

/// `T = (1 - τ) + τ u`, exactly one for null players.
#[inline]
pub(crate) fn node_factor(tau: f64, one_minus_tau: f64, u: f64) -> f64 {
    if u == 1.0 {
        1.0
    } else {
        one_minus_tau + tau * u
    }
}

fn node_product(factors: &[f64], tau: f64, one_minus_tau: f64) -> NodeProduct {
    let plan = ReductionPlan::new(factors.len()).expect("games are non-empty");
    reduce_map(
        |j| NodeProduct::leaf(j, node_factor(tau, one_minus_tau, factors[j])),
        NodeProduct::combine,
        &plan,
    )
}

/// Log-space product of `T_j = (1 - τ) + τ u_j` at a single node.
pub fn shapley_logspace_node(game: &ProductGame, tau: f64) -> SignedLogProduct {
    node_product(&game.factors, tau, 1.0 - tau).to_public()
}

/// Quadrature estimate of the Shapley vector.
///
/// Exact whenever `rule.order() >= ⌈d/2⌉`.
pub fn shapley_quadrature(game: &ProductGame, rule: &QuadratureRule) -> Result<Attribution> {
    let d = game.dim();
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            max: MAX_QUADRATURE_DIM,
        });
    }
    let phi = quadrature_phi(&game.factors, rule);
    Ok(Attribution {
        phi,
        budget: rule.order(),
        exact: rule.order() >= d.div_ceil(2),
    })
}

fn quadrature_phi(u: &[f64], rule: &QuadratureRule) -> Vec<f64> {
    let d = u.len();
    let m = rule.order();
    let parallel = d * m >= PAR_THRESHOLD;

    let node = |q: usize| node_product(u, rule.nodes()[q], rule.complement(q));
    let products: Vec<NodeProduct> = if parallel {
        (0..m).into_par_iter().map(node).collect()
    } else {
        (0..m).map(node).collect()
    };

    let coordinate = |i: usize| {
        let ui = u[i];
        if ui == 1.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (q, np) in products.iter().enumerate() {
            let t_i = node_factor(rule.nodes()[q], rule.complement(q), ui);
            acc += np.weighted_leave_one_out(i, t_i, rule.weights()[q]);
        }
        (ui - 1.0) * acc
    };
    if parallel {
        (0..d).into_par_iter().map(coordinate).collect()
    } else {
        (0..d).map(coordinate).collect()
    }
}

/// Shapley vector of `Σ_k α_k v_k` for product games sharing one dimension.
pub fn shapley_weighted_sum(
    terms: &[(f64, ProductGame)],
    rule: &QuadratureRule,
) -> Result<Attribution> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidInput("weighted sum of zero games".into()))?;
    let d = first.1.dim();
    weighted_sum_with(terms.len(), d, rule, |k| {
        Ok((terms[k].0, terms[k].1.clone()))
    })
}

const GAME_BATCH: usize = 256;

/// Weighted sum over `count` games produced on demand by `term(k)`.
///
/// Games are evaluated in parallel batches; the accumulation runs in
/// ascending `k` so the result is independent of scheduling.
pub(crate) fn weighted_sum_with<F>(
    count: usize,
    d: usize,
    rule: &QuadratureRule,
    term: F,
) -> Result<Attribution>
where
    F: Fn(usize) -> Result<(f64, ProductGame)> + Sync,
{
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            max: MAX_QUADRATURE_DIM,
        });
    }
    let mut phi = vec![0.0; d];
    let mut start = 0;
    while start < count {
        let end = (start + GAME_BATCH).min(count);
        let batch: Vec<Option<(f64, Vec<f64>)>> = (start..end)
            .into_par_iter()
            .map(|k| {
                let (alpha, game) = term(k)?;
                if game.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: game.dim(),
                    });
                }
                if alpha == 0.0 {
                    return Ok(None);
                }
                Ok(Some((alpha, quadrature_phi(&game.factors, rule))))
            })
            .collect::<Result<_>>()?;
        for (alpha, local) in batch.into_iter().flatten() {
            for (acc, v) in phi.iter_mut().zip(&local) {
                *acc += alpha * v;
            }
        }
        start = end;
    }
    Ok(Attribution {
        phi,
        budget: rule.order(),
        exact: rule.order() >= d.div_ceil(2),
    })
}

/// `min(⌈d/2⌉, cap)`, never below one.
pub fn default_budget(d: usize, cap: usize) -> usize {
    d.div_ceil(2).min(cap).max(1)
}

/// Shapley weight `μ(s) = s! (d - s - 1)! / d!`, evaluated through log-gamma.
pub fn shapley_weight(s: usize, d: usize) -> Result<f64> {
    if d == 0 || s >= d {
        return Err(Error::CoalitionSize { s, d });
    }
    let lg = |n: usize| libm::lgamma(n as f64 + 1.0);
    Ok((lg(s) + lg(d - s - 1) - lg(d)).exp())
}

/// Exact Shapley vector by enumerating all `2^d` coalitions.
pub fn shapley_bruteforce(game: &ProductGame) -> Result<Attribution> {
    let u = game.factors();
    let phi = shapley_bruteforce_fn(u.len(), |mask| {
        let mut v = 1.0;
        for (j, &uj) in u.iter().enumerate() {
            if mask & (1 << j) != 0 {
                v *= uj;
            }
        }
        v
    })?;
    Ok(Attribution {
        phi,
        budget: 0,
        exact: true,
    })
}

/// Shapley vector of an arbitrary game on `d ≤ 25` players, given its value
/// on every coalition bitmask.
///
/// `φ_i = Σ_{S∌i} μ(|S|) (v(S ∪ {i}) - v(S))`, regrouped so each coalition is
/// evaluated once.
pub fn shapley_bruteforce_fn<F: Fn(u32) -> f64>(d: usize, value: F) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::EmptyGame);
    }
    if d > BRUTE_FORCE_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            max: BRUTE_FORCE_MAX_DIM,
        });
    }
    let mu: Vec<f64> = (0..d)
        .map(|s| shapley_weight(s, d))
        .collect::<Result<_>>()?;
    let mut phi = vec![0.0; d];
    for mask in 0u32..(1u32 << d) {
        let v = value(mask);
        let size = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                *p += mu[size - 1] * v;
            } else {
                *p -= mu[size] * v;
            }
        }
    }
    Ok(phi)
}

/// Relative violation of `Σ φ_i = Π u_j - 1`.
///
/// Returns `|Σφ - (Πu - 1)| / max(1, |Πu|)`. When `|Πu|` is beyond the
/// double range the comparison is made between `ln|Σφ + 1|` and `Σ ln|u_j|`,
/// whose difference is the same relative error.
pub fn efficiency_defect(game: &ProductGame, phi: &[f64]) -> f64 {
    let total: f64 = phi.iter().sum();
    let u = game.factors();
    if u.contains(&0.0) {
        return (total + 1.0).abs();
    }
    let acc = u
        .iter()
        .enumerate()
        .map(|(j, &x)| NodeProduct::leaf(j, x))
        .fold(NodeProduct::leaf(0, 1.0), |a, b| {
            NodeProduct::combine(&a, &b)
        });
    let log_abs = from_fixed(acc.log_fixed);
    let sign = if acc.negative { -1.0 } else { 1.0 };
    if log_abs < f64::MAX.ln() {
        let prod = sign * log_abs.exp();
        return (total - (prod - 1.0)).abs() / prod.abs().max(1.0);
    }
    // |Π u| exceeds double range, so compare log magnitudes; their
    // difference is the relative error. Σφ is summed after scaling by the
    // largest |φ_i| so it cannot overflow, and the +1 is below resolution.
    let scale = phi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    if !scale.is_finite() || scale == 0.0 {
        return f64::INFINITY;
    }
    let scaled: f64 = phi.iter().map(|p| p / scale).sum();
    if scaled == 0.0 || scaled.signum() != sign {
        return f64::INFINITY;
    }
    (scale.ln() + scaled.abs().ln() - log_abs).abs()
}
