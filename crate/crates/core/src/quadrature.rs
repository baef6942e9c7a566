//! Gauss-Legendre rules on the unit interval.
//!
//! Nodes are the roots of the shifted Legendre polynomial `P_m(2t - 1)`. They
//! are located with Newton's method on the three-term recurrence, seeded with
//! Chebyshev-like guesses, and fall back to bisection inside the classical
//! interlacing bracket when Newton fails to settle. Only the upper half of the
//! roots is computed; the lower half is obtained by reflection, so the rule is
//! symmetric about `1/2` by construction.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};

/// Largest order accepted by [`gauss_legendre_rule`].
pub const DEFAULT_ORDER_CAP: usize = 100_000;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// An `m`-point Gauss-Legendre rule on `[0, 1]`.
///
/// Nodes are strictly increasing and strictly inside `(0, 1)`; weights are
/// positive and sum to one. The rule integrates every polynomial of degree
/// at most `2m - 1` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `1 - τ_q`, read off the mirrored node so no cancellation occurs.
    #[inline]
    pub fn complement(&self, q: usize) -> f64 {
        self.nodes[self.nodes.len() - 1 - q]
    }

    /// Iterator over `(τ_q, 1 - τ_q, ω_q)` in ascending node order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.order()).map(move |q| (self.nodes[q], self.complement(q), self.weights[q]))
    }

    /// `Σ ω_q f(τ_q)`, summed in ascending node order.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// Memoized rule of order `m` with the default cap.
pub fn gauss_legendre_rule(m: usize) -> Result<Arc<QuadratureRule>> {
    gauss_legendre_rule_with_cap(m, DEFAULT_ORDER_CAP)
}

/// Memoized rule of order `m`, rejecting `m = 0` and `m > cap`.
pub fn gauss_legendre_rule_with_cap(m: usize, cap: usize) -> Result<Arc<QuadratureRule>> {
    if m == 0 || m > cap {
        return Err(Error::Budget { order: m, cap });
    }
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.read().unwrap_or_else(|e| e.into_inner()).get(&m) {
        return Ok(Arc::clone(rule));
    }
    // Computed outside the lock; racing writers produce identical rules.
    let rule = Arc::new(compute_rule(m));
    let mut guard = cache.write().unwrap_or_else(|e| e.into_inner());
    Ok(Arc::clone(guard.entry(m).or_insert(rule)))
}

/// Builds the rule of order `m` without consulting or filling the cache.
pub fn gauss_legendre_rule_uncached(m: usize) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(Error::Budget {
            order: m,
            cap: DEFAULT_ORDER_CAP,
        });
    }
    Ok(compute_rule(m))
}

/// `|Σ ω_q τ_q^k - 1/(k+1)|`.
pub fn monomial_exactness_defect(rule: &QuadratureRule, k: u32) -> f64 {
    let approx = rule.integrate(|t| t.powi(k as i32));
    (approx - 1.0 / (f64::from(k) + 1.0)).abs()
}

/// Uncached rule construction. `m` must be positive.
pub(crate) fn compute_rule(m: usize) -> QuadratureRule {
    assert!(m >= 1, "rule order must be positive");
    let half = m / 2;
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];

    // k-th largest root x_k of P_m on [-1, 1], k = 1..=half.
    for k in 1..=half {
        let x = legendre_root(m, k);
        let (_, dp) = legendre_with_derivative(m, x);
        let one_minus_x2 = (1.0 - x) * (1.0 + x);
        // Weight on [-1, 1] is 2 / ((1 - x^2) P'(x)^2); halve for [0, 1].
        let w = 1.0 / (one_minus_x2 * dp * dp);
        let lo = 0.5 * (1.0 - x);
        let hi = 0.5 * (1.0 + x);
        nodes[k - 1] = lo;
        nodes[m - k] = hi;
        weights[k - 1] = w;
        weights[m - k] = w;
    }
    if m % 2 == 1 {
        let (_, dp) = legendre_with_derivative(m, 0.0);
        nodes[half] = 0.5;
        weights[half] = 1.0 / (dp * dp);
    }
    QuadratureRule { nodes, weights }
}

/// `(P_n(x), P_n'(x))` via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for j in 2..=n {
        let jf = j as f64;
        let next = ((2.0 * jf - 1.0) * x * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = next;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    let dp = nf * (x * p - p_prev) / ((x - 1.0) * (x + 1.0));
    (p, dp)
}

fn legendre_root(n: usize, k: usize) -> f64 {
    newton_root(n, k).unwrap_or_else(|| bisect_root(n, k))
}

fn newton_root(n: usize, k: usize) -> Option<f64> {
    let nf = n as f64;
    let mut x = (PI * (k as f64 - 0.25) / (nf + 0.5)).cos();
    let (lo, hi) = root_bracket(n, k);
    for _ in 0..NEWTON_MAX_ITER {
        let (p, dp) = legendre_with_derivative(n, x);
        let step = p / dp;
        x -= step;
        if !x.is_finite() {
            return None;
        }
        if step.abs() <= NEWTON_TOL {
            // Converging to a neighbouring root would break interlacing.
            return (lo..=hi).contains(&x).then_some(x);
        }
    }
    None
}

/// Bracket `[cos(kπ/(n+1)), cos((k-1/2)π/(n+1/2))]` containing the k-th
/// largest root of `P_n`.
fn root_bracket(n: usize, k: usize) -> (f64, f64) {
    let nf = n as f64;
    let kf = k as f64;
    let lo = (kf * PI / (nf + 1.0)).cos();
    let hi = ((kf - 0.5) * PI / (nf + 0.5)).cos();
    (lo, hi)
}

pub(crate) fn bisect_root(n: usize, k: usize) -> f64 {
    let (mut lo, mut hi) = root_bracket(n, k);
    let mut p_lo = legendre_with_derivative(n, lo).0;
    if p_lo == 0.0 {
        return lo;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let p_mid = legendre_with_derivative(n, mid).0;
        if p_mid == 0.0 {
            return mid;
        }
        if (p_mid < 0.0) == (p_lo < 0.0) {
            lo = mid;
            p_lo = p_mid;
        } else {
            hi = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_point_rule_is_midpoint() {
        let rule = compute_rule(1);
        assert_eq!(rule.nodes(), &[0.5]);
        assert_eq!(rule.weights(), &[1.0]);
    }

    #[test]
    fn two_point_rule_matches_closed_form() {
        // Roots of 6t^2 - 6t + 1.
        let r = 1.0 / 3f64.sqrt();
        let rule = compute_rule(2);
        assert_abs_diff_eq!(rule.nodes()[0], 0.5 * (1.0 - r), epsilon = 1e-15);
        assert_abs_diff_eq!(rule.nodes()[1], 0.5 * (1.0 + r), epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn three_point_rule_integrates_quintic() {
        let rule = compute_rule(3);
        assert_abs_diff_eq!(rule.integrate(|t| t.powi(5)), 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn defect_examples() {
        let two = compute_rule(2);
        assert!(monomial_exactness_defect(&two, 0) <= 1e-14);
        assert!(monomial_exactness_defect(&two, 3) <= 1e-14);
        // Σ ω τ^4 = 7/36 for the 2-point rule; 1/5 - 7/36 = 1/180.
        let d4 = monomial_exactness_defect(&two, 4);
        assert_abs_diff_eq!(d4, 1.0 / 180.0, epsilon = 1e-15);
    }

    #[test]
    fn bisection_agrees_with_newton() {
        for n in [2usize, 5, 17, 64, 301] {
            for k in 1..=n / 2 {
                let a = newton_root(n, k).expect("newton converges");
                let b = bisect_root(n, k);
                assert!((a - b).abs() < 1e-14, "n={n} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(matches!(gauss_legendre_rule(0), Err(Error::Budget { .. })));
        assert!(matches!(
            gauss_legendre_rule_with_cap(11, 10),
            Err(Error::Budget { order: 11, cap: 10 })
        ));
        assert!(gauss_legendre_rule_with_cap(10, 10).is_ok());
    }

    #[test]
    fn memoized_rules_are_shared() {
        let a = gauss_legendre_rule(7).unwrap();
        let b = gauss_legendre_rule(7).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn complement_is_mirrored_node() {
        let rule = compute_rule(9);
        for q in 0..9 {
            assert_abs_diff_eq!(rule.complement(q), 1.0 - rule.nodes()[q], epsilon = 1e-15);
        }
    }
}
