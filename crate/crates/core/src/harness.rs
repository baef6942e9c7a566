//! Convergence, verification and timing harnesses.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_finite, Error, Result};
use crate::game::{default_budget, shapley_quadrature, Attribution, ProductGame};
use crate::io::{serialize_f17, serialize_f17_vec};
use crate::kernel::{explain_kernel, ProductKernelModel};
use crate::quadrature::gauss_legendre_rule;
use crate::tree::{efficiency_violation, explain_ensemble, BudgetPolicy, TreeEnsemble};
use crate::VERSION;

/// Largest budget in the default convergence grid.
pub const GRID_MAX: usize = 500;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// A model together with the budget it is explained at.
#[derive(Debug, Clone, Copy)]
pub enum Explainer<'a> {
    Trees {
        ensemble: &'a TreeEnsemble,
        policy: BudgetPolicy,
    },
    Kernel {
        model: &'a ProductKernelModel,
        budget: usize,
    },
}

impl Explainer<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Trees { ensemble, .. } => ensemble.feature_count(),
            Self::Kernel { model, .. } => model.dim(),
        }
    }

    pub fn explain(&self, x: &[f64]) -> Result<Attribution> {
        match *self {
            Self::Trees { ensemble, policy } => explain_ensemble(ensemble, x, policy),
            Self::Kernel { model, budget } => Ok(explain_kernel(model, x, budget)?.attribution),
        }
    }

    /// `|base + Σ φ - f(x)|`.
    pub fn violation(&self, x: &[f64], phi: &[f64]) -> f64 {
        match *self {
            Self::Trees { ensemble, .. } => efficiency_violation(ensemble.trees(), x, phi),
            Self::Kernel { model, .. } => {
                (model.base_value() + phi.iter().sum::<f64>() - model.predict(x)).abs()
            }
        }
    }
}

/// Ten geometrically spaced budgets in `[1, min(500, ⌈d/2⌉)]`, rounded and
/// deduplicated.
pub fn default_budget_grid(d: usize) -> Vec<usize> {
    let hi = default_budget(d, GRID_MAX);
    let mut grid: Vec<usize> = (0..10)
        .map(|k| (hi as f64).powf(k as f64 / 9.0).round() as usize)
        .map(|m| m.clamp(1, hi))
        .collect();
    grid.dedup();
    grid
}

/// What a convergence study explains.
#[derive(Debug, Clone, Copy)]
pub enum ConvergenceTarget<'a> {
    Game(&'a ProductGame),
    Kernel {
        model: &'a ProductKernelModel,
        instances: &'a [Vec<f64>],
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub version: &'static str,
    pub dimension: usize,
    pub instances: usize,
    pub budgets: Vec<usize>,
    #[serde(serialize_with = "serialize_f17_vec")]
    pub mean_error: Vec<f64>,
    #[serde(serialize_with = "serialize_f17_vec")]
    pub std_error: Vec<f64>,
    pub reference_budget: usize,
    pub reference_exact: bool,
    pub warning: Option<String>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("budget,mean_error,std_error\n");
        for ((m, e), s) in self
            .budgets
            .iter()
            .zip(&self.mean_error)
            .zip(&self.std_error)
        {
            out.push_str(&format!(
                "{m},{},{}\n",
                crate::io::format_f64(*e),
                crate::io::format_f64(*s)
            ));
        }
        out
    }
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// ℓ2 error of each budget against one reference attribution per instance.
pub fn run_convergence(
    target: ConvergenceTarget<'_>,
    budgets: &[usize],
    reference_budget: usize,
) -> Result<ConvergenceReport> {
    if budgets.is_empty() {
        return Err(Error::InvalidInput("no budgets given".into()));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "budgets must be strictly increasing".into(),
        ));
    }
    let (dimension, instances) = match target {
        ConvergenceTarget::Game(g) => (g.dim(), 1),
        ConvergenceTarget::Kernel { model, instances } => {
            if instances.is_empty() {
                return Err(Error::InvalidInput("no instances given".into()));
            }
            (model.dim(), instances.len())
        }
    };
    let explain = |i: usize, m: usize| -> Result<Vec<f64>> {
        match target {
            ConvergenceTarget::Game(g) => {
                let rule = gauss_legendre_rule(m)?;
                Ok(shapley_quadrature(g, &rule)?.phi)
            }
            ConvergenceTarget::Kernel { model, instances } => {
                Ok(explain_kernel(model, &instances[i], m)?.attribution.phi)
            }
        }
    };
    // errors[i][b]
    let errors: Vec<Vec<f64>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let reference = explain(i, reference_budget)?;
            budgets
                .iter()
                .map(|&m| Ok(l2_distance(&explain(i, m)?, &reference)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (mean_error, std_error) = (0..budgets.len())
        .map(|b| mean_std(&errors.iter().map(|e| e[b]).collect::<Vec<_>>()))
        .unzip();
    let needed = dimension.div_ceil(2);
    let reference_exact = reference_budget >= needed;
    let warning = (!reference_exact).then(|| {
        format!("reference budget {reference_budget} is below {needed}; reference is not exact")
    });
    Ok(ConvergenceReport {
        version: VERSION,
        dimension,
        instances,
        budgets: budgets.to_vec(),
        mean_error,
        std_error,
        reference_budget,
        reference_exact,
        warning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub version: &'static str,
    pub rows: usize,
    #[serde(serialize_with = "serialize_f17")]
    pub tolerance: f64,
    #[serde(serialize_with = "serialize_f17")]
    pub max_violation: f64,
    pub worst_row: usize,
    pub passed: bool,
    #[serde(serialize_with = "serialize_f17_vec")]
    pub violations: Vec<f64>,
}

/// Efficiency violation per row, computed from `phis` when supplied and from
/// fresh explanations otherwise.
pub fn run_verify(
    explainer: Explainer<'_>,
    data: &[Vec<f64>],
    phis: Option<&[Vec<f64>]>,
    tolerance: f64,
) -> Result<VerifyReport> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data has no rows".into()));
    }
    let d = explainer.dim();
    for (r, row) in data.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidInput(format!(
                "data row {} has {} values, expected {d}",
                r + 1,
                row.len()
            )));
        }
        check_finite(row)?;
    }
    if let Some(phis) = phis {
        if phis.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                found: phis.len(),
            });
        }
        if let Some((r, p)) = phis.iter().enumerate().find(|(_, p)| p.len() != d) {
            return Err(Error::InvalidInput(format!(
                "phi row {} has {} values, expected {d}",
                r + 1,
                p.len()
            )));
        }
    }
    let violations: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|r| {
            let x = &data[r];
            match phis {
                Some(p) => Ok(explainer.violation(x, &p[r])),
                None => Ok(explainer.violation(x, &explainer.explain(x)?.phi)),
            }
        })
        .collect::<Result<_>>()?;
    // NaN counts as the worst possible violation.
    let (worst_row, max_violation) = violations
        .iter()
        .map(|&v| if v.is_nan() { f64::INFINITY } else { v })
        .enumerate()
        .fold(
            (0, 0.0f64),
            |best, (r, v)| if v > best.1 { (r, v) } else { best },
        );
    Ok(VerifyReport {
        version: VERSION,
        rows: data.len(),
        tolerance,
        max_violation,
        worst_row,
        passed: max_violation <= tolerance,
        violations,
    })
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub model_id: String,
    pub repeats: usize,
    pub timeout: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub model_id: String,
    pub instances: usize,
    pub repeats: usize,
    pub threads: usize,
    /// Milliseconds per instance.
    #[serde(serialize_with = "serialize_f17")]
    pub mean_ms: f64,
    #[serde(serialize_with = "serialize_f17")]
    pub std_ms: f64,
    #[serde(serialize_with = "serialize_f17_vec")]
    pub repeat_ms: Vec<f64>,
    #[serde(serialize_with = "serialize_f17")]
    pub max_violation: f64,
    pub timed_out: bool,
    pub deterministic: bool,
    pub phi_digest: String,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str =
        "model_id,instances,repeats,threads,mean_ms,std_ms,max_violation,deterministic,phi_digest";

    pub fn to_csv(&self) -> String {
        let f = crate::io::format_f64;
        let (mean, std) = if self.timed_out {
            ("t/o".to_string(), "t/o".to_string())
        } else {
            (f(self.mean_ms), f(self.std_ms))
        };
        format!(
            "{},{},{},{},{mean},{std},{},{},{}",
            self.model_id,
            self.instances,
            self.repeats,
            self.threads,
            f(self.max_violation),
            self.deterministic,
            self.phi_digest
        )
    }
}

/// FNV-1a over the bit patterns of every coordinate.
pub fn phi_digest(phis: &[Vec<f64>]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in phis.iter().flatten() {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

struct Pass {
    phis: Vec<Vec<f64>>,
    elapsed: Duration,
    timed_out: bool,
}

fn timed_pass(explainer: &Explainer<'_>, data: &[Vec<f64>], timeout: Duration) -> Result<Pass> {
    let timed_out = AtomicBool::new(false);
    let start = Instant::now();
    let phis = data
        .par_iter()
        .map(|x| {
            if timed_out.load(Ordering::Relaxed) {
                return Ok(Vec::new());
            }
            let t = Instant::now();
            let phi = explainer.explain(x)?.phi;
            if t.elapsed() > timeout {
                timed_out.store(true, Ordering::Relaxed);
            }
            Ok(phi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pass {
        phis,
        elapsed: start.elapsed(),
        timed_out: timed_out.into_inner(),
    })
}

/// Times `repeats` passes over `data` after one untimed warm-up pass.
///
/// The violation is measured on the phi of the timed passes, and every pass
/// must reproduce the warm-up phi bit for bit.
pub fn run_bench(
    explainer: Explainer<'_>,
    data: &[Vec<f64>],
    config: &BenchConfig,
) -> Result<BenchRow> {
    if config.repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("data has no rows".into()));
    }
    let warm = timed_pass(&explainer, data, config.timeout)?;
    let mut row = BenchRow {
        model_id: config.model_id.clone(),
        instances: data.len(),
        repeats: config.repeats,
        threads: rayon::current_num_threads(),
        mean_ms: f64::NAN,
        std_ms: f64::NAN,
        repeat_ms: Vec::new(),
        max_violation: f64::NAN,
        timed_out: warm.timed_out,
        deterministic: true,
        phi_digest: String::new(),
    };
    if warm.timed_out {
        return Ok(row);
    }
    let mut last = warm.phis.clone();
    for _ in 0..config.repeats {
        let pass = timed_pass(&explainer, data, config.timeout)?;
        if pass.timed_out {
            row.timed_out = true;
            return Ok(row);
        }
        row.repeat_ms
            .push(pass.elapsed.as_secs_f64() * 1e3 / data.len() as f64);
        let same = pass
            .phis
            .iter()
            .flatten()
            .zip(warm.phis.iter().flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        row.deterministic &= same;
        last = pass.phis;
    }
    (row.mean_ms, row.std_ms) = mean_std(&row.repeat_ms);
    row.max_violation = data
        .iter()
        .zip(&last)
        .map(|(x, phi)| explainer.violation(x, phi))
        .fold(0.0, f64::max);
    row.phi_digest = phi_digest(&last);
    Ok(row)
}
