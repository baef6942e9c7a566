use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use glshap::harness::{mean_std, DEFAULT_TOLERANCE};
use glshap::io::{
    csv_line, detect_model_kind, f17, format_f64, kernel_model_to_json, kernel_train_csv,
    load_kernel_model, load_tree_ensemble, read_matrix, read_vector, serialize_f17_vec,
    tree_ensemble_to_json, ModelKind, F17,
};
use glshap::synth::{random_ensemble, random_instances, regression_kernel_model, TreeGenConfig};
use glshap::{
    default_budget, default_budget_grid, explain_ensemble, explain_kernel, explain_tree_direct,
    gauss_legendre_rule, gauss_legendre_rule_with_cap, kernel_value, run_bench, run_convergence,
    run_verify, shapley_bruteforce, shapley_bruteforce_fn, shapley_quadrature, tree_value,
    Attribution, BenchConfig, BudgetPolicy, ConvergenceTarget, Explainer, ProductGame,
    ProductKernelModel, TreeEnsemble, BRUTE_FORCE_MAX_DIM, DEFAULT_BUDGET_CAP, DEFAULT_ORDER_CAP,
    VERSION,
};

#[derive(Parser, Debug)]
#[command(
    name = "glshap",
    version,
    about = "Shapley attributions for product games, product kernels and tree ensembles"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "GLSHAP_THREADS")]
    threads: Option<usize>,
    /// Emit JSON (the default).
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit CSV.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gauss-Legendre nodes and weights on [0, 1].
    Rule(RuleArgs),
    /// Explain a product game given by its factors.
    ExplainGame(GameArgs),
    /// Explain a product-kernel model at one or more instances.
    ExplainKernel(ModelArgs),
    /// Explain a tree ensemble at one or more instances.
    ExplainTree(TreeArgs),
    /// Brute-force Shapley values over all coalitions (d <= 25).
    Oracle(OracleArgs),
    /// Efficiency violation of explanations over a data file.
    Verify(VerifyArgs),
    /// Error against a reference budget over a grid of budgets.
    Convergence(ConvergenceArgs),
    /// Time explanations over a data file.
    Bench(BenchArgs),
    /// Write a synthetic model and data set.
    Gen(GenArgs),
}

#[derive(Args, Debug, Serialize)]
struct RuleArgs {
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER_CAP)]
    cap: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BudgetArgs {
    /// Quadrature order.
    #[arg(long, conflicts_with = "exact")]
    budget: Option<usize>,
    /// Use the exact order ceil(d/2) (per tree: ceil(eta/2)).
    #[arg(long)]
    exact: bool,
    /// Largest order used without an explicit --budget.
    #[arg(long, default_value_t = DEFAULT_BUDGET_CAP)]
    cap: usize,
}

impl BudgetArgs {
    fn game_order(&self, d: usize) -> Result<usize> {
        let m = match self.budget {
            Some(m) => m,
            None if self.exact => d.div_ceil(2).max(1),
            None => default_budget(d, self.cap),
        };
        ensure!(m >= 1, "budget must be at least 1");
        ensure!(m <= self.cap, "budget {m} exceeds --cap {}", self.cap);
        Ok(m)
    }

    fn tree_policy(&self, ensemble: &TreeEnsemble) -> Result<BudgetPolicy> {
        if let Some(m) = self.budget {
            ensure!(m >= 1, "budget must be at least 1");
            ensure!(m <= self.cap, "budget {m} exceeds --cap {}", self.cap);
            return Ok(BudgetPolicy::Fixed(m));
        }
        if self.exact {
            let needed = ensemble
                .trees()
                .iter()
                .map(|t| t.exact_budget())
                .max()
                .unwrap_or(1);
            ensure!(
                needed <= self.cap,
                "exact order {needed} exceeds --cap {}",
                self.cap
            );
            return Ok(BudgetPolicy::Exact);
        }
        Ok(BudgetPolicy::Capped(self.cap))
    }
}

#[derive(Args, Debug, Serialize)]
struct GameArgs {
    /// JSON array or single-column CSV of factors.
    #[arg(long)]
    factors: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Cross-check against brute force.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Instances: JSON array(s) or CSV rows.
    #[arg(long)]
    x: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args, Debug, Serialize)]
struct TreeArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Per-leaf evaluation instead of the single-pass traversal.
    #[arg(long)]
    direct: bool,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[arg(long, conflicts_with_all = ["model", "x"])]
    factors: Option<PathBuf>,
    #[arg(long, requires = "x")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    x: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Precomputed attributions, one row per data row.
    #[arg(long)]
    phi: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    features: usize,
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 32)]
    leaves: usize,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Preference for extending the newest leaf (0..1).
    #[arg(long, default_value_t = 0.0)]
    deep_bias: f64,
    #[arg(long, default_value_t = 50)]
    n_train: usize,
    /// Synthetic instance count.
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SynthKind {
    Trees,
    Kernel,
}

#[derive(Args, Debug, Serialize)]
struct ConvergenceArgs {
    /// Product-game factors.
    #[arg(long, conflicts_with_all = ["model", "data"])]
    factors: Option<PathBuf>,
    /// Kernel model; a synthetic one is generated when absent.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    /// Comma-separated, strictly increasing budgets.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// Reference budget (default ceil(d/2)).
    #[arg(long)]
    reference: Option<usize>,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// Model file; a synthetic model is generated when absent.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 300.0)]
    timeout_s: f64,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long, value_enum, default_value_t = SynthKind::Trees)]
    synthetic: SynthKind,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Serialize)]
struct RuleOutput {
    order: usize,
    nodes: Vec<F17>,
    weights: Vec<F17>,
}

#[derive(Serialize)]
struct ExplainOutput {
    #[serde(serialize_with = "serialize_f17_vec")]
    phi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_value: Option<F17>,
    budget: usize,
    exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_max_error: Option<F17>,
}

impl ExplainOutput {
    fn new(a: Attribution, base_value: Option<f64>) -> Self {
        Self {
            phi: a.phi,
            base_value: base_value.map(F17),
            budget: a.budget,
            exact: a.exact,
            oracle_max_error: None,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    config: Value,
    report: &'a T,
}

struct Ctx {
    csv: bool,
    threads: usize,
}

impl Ctx {
    fn config<T: Serialize>(&self, command: &str, args: &T) -> Result<Value> {
        let mut v = serde_json::to_value(args)?;
        if let Value::Object(map) = &mut v {
            map.insert("command".into(), command.into());
            map.insert("threads".into(), self.threads.into());
        }
        Ok(v)
    }

    fn emit_json<T: Serialize + ?Sized>(&self, value: &T) -> Result<()> {
        println!("{}", serde_json::to_string_pretty(value)?);
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx {
        csv: cli.csv,
        threads: rayon::current_num_threads(),
    };
    match &cli.command {
        Command::Rule(a) => rule(&ctx, a),
        Command::ExplainGame(a) => explain_game(&ctx, a),
        Command::ExplainKernel(a) => explain_kernel_cmd(&ctx, a),
        Command::ExplainTree(a) => explain_tree(&ctx, a),
        Command::Oracle(a) => oracle(&ctx, a),
        Command::Verify(a) => verify(&ctx, a),
        Command::Convergence(a) => convergence(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Gen(a) => generate(&ctx, a),
    }
}

fn rule(ctx: &Ctx, a: &RuleArgs) -> Result<ExitCode> {
    let rule = gauss_legendre_rule_with_cap(a.order, a.cap)?;
    if ctx.csv {
        println!("node,weight");
        for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
            println!("{}", csv_line(&[t, w]));
        }
    } else {
        ctx.emit_json(&RuleOutput {
            order: rule.order(),
            nodes: f17(rule.nodes()),
            weights: f17(rule.weights()),
        })?;
    }
    Ok(ExitCode::SUCCESS)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_oracle_dim(d: usize) -> Result<()> {
    ensure!(
        d <= BRUTE_FORCE_MAX_DIM,
        "brute force is limited to {BRUTE_FORCE_MAX_DIM} features, got {d}"
    );
    Ok(())
}

/// Prints explanations and returns exit code 2 if any oracle check failed.
fn emit_explanations(ctx: &Ctx, outputs: &[ExplainOutput], tolerance: f64) -> Result<ExitCode> {
    if ctx.csv {
        let d = outputs.first().map_or(0, |o| o.phi.len());
        let mut header: Vec<String> = (0..d).map(|j| format!("phi_{j}")).collect();
        let has_base = outputs.iter().any(|o| o.base_value.is_some());
        let has_oracle = outputs.iter().any(|o| o.oracle_max_error.is_some());
        if has_base {
            header.push("base_value".into());
        }
        header.extend(["budget".into(), "exact".into()]);
        if has_oracle {
            header.push("oracle_max_error".into());
        }
        println!("{}", header.join(","));
        for o in outputs {
            let mut line = csv_line(&o.phi);
            if let Some(b) = o.base_value {
                line.push_str(&format!(",{}", format_f64(b.0)));
            }
            line.push_str(&format!(",{},{}", o.budget, o.exact));
            if let Some(e) = o.oracle_max_error {
                line.push_str(&format!(",{}", format_f64(e.0)));
            }
            println!("{line}");
        }
    } else if let [single] = outputs {
        ctx.emit_json(single)?;
    } else {
        ctx.emit_json(outputs)?;
    }
    let failed = outputs
        .iter()
        .filter_map(|o| o.oracle_max_error)
        .any(|e| e.0.is_nan() || e.0 > tolerance);
    Ok(if failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn explain_game(ctx: &Ctx, a: &GameArgs) -> Result<ExitCode> {
    let game = ProductGame::new(read_vector(&a.factors)?)?;
    let rule = gauss_legendre_rule(a.budget.game_order(game.dim())?)?;
    let attribution = shapley_quadrature(&game, &rule)?;
    let oracle = if a.oracle {
        check_oracle_dim(game.dim())?;
        Some(max_abs_diff(
            &attribution.phi,
            &shapley_bruteforce(&game)?.phi,
        ))
    } else {
        None
    };
    let mut out = ExplainOutput::new(attribution, None);
    out.oracle_max_error = oracle.map(F17);
    emit_explanations(ctx, &[out], a.tolerance)
}

fn load_kernel(path: &Path) -> Result<ProductKernelModel> {
    load_kernel_model(path).with_context(|| format!("loading kernel model {}", path.display()))
}

fn load_trees(path: &Path) -> Result<TreeEnsemble> {
    load_tree_ensemble(path).with_context(|| format!("loading tree model {}", path.display()))
}

fn load_instances(path: &Path, d: usize) -> Result<Vec<Vec<f64>>> {
    let rows = read_matrix(path)?;
    ensure!(!rows.is_empty(), "{}: no instances", path.display());
    ensure!(
        rows[0].len() == d,
        "{}: instances have {} values, model expects {d}",
        path.display(),
        rows[0].len()
    );
    Ok(rows)
}

fn kernel_oracle(model: &ProductKernelModel, x: &[f64]) -> Result<Vec<f64>> {
    let d = model.dim();
    check_oracle_dim(d)?;
    Ok(shapley_bruteforce_fn(d, |mask| {
        let subset: Vec<bool> = (0..d).map(|j| mask >> j & 1 == 1).collect();
        kernel_value(model, x, &subset)
    })?)
}

fn tree_oracle(ensemble: &TreeEnsemble, x: &[f64]) -> Result<Vec<f64>> {
    let d = ensemble.feature_count();
    check_oracle_dim(d)?;
    Ok(shapley_bruteforce_fn(d, |mask| {
        let subset: Vec<bool> = (0..d).map(|j| mask >> j & 1 == 1).collect();
        ensemble
            .trees()
            .iter()
            .map(|t| tree_value(t, x, &subset))
            .sum()
    })?)
}

fn tree_base_value(ensemble: &TreeEnsemble, x: &[f64]) -> f64 {
    let empty = vec![false; ensemble.feature_count()];
    ensemble
        .trees()
        .iter()
        .map(|t| tree_value(t, x, &empty))
        .sum()
}

fn explain_kernel_cmd(ctx: &Ctx, a: &ModelArgs) -> Result<ExitCode> {
    let model = load_kernel(&a.model)?;
    let rows = load_instances(&a.x, model.dim())?;
    let m = a.budget.game_order(model.dim())?;
    let outputs = rows
        .iter()
        .map(|x| {
            let e = explain_kernel(&model, x, m)?;
            let oracle = if a.oracle {
                Some(max_abs_diff(&e.attribution.phi, &kernel_oracle(&model, x)?))
            } else {
                None
            };
            let mut out = ExplainOutput::new(e.attribution, Some(e.base_value));
            out.oracle_max_error = oracle.map(F17);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    emit_explanations(ctx, &outputs, a.tolerance)
}

fn explain_trees_direct(
    ensemble: &TreeEnsemble,
    x: &[f64],
    policy: BudgetPolicy,
) -> Result<Attribution> {
    let mut total = Attribution::zeros(ensemble.feature_count(), 0, true);
    for tree in ensemble.trees() {
        let order = match policy {
            BudgetPolicy::Exact => tree.exact_budget(),
            BudgetPolicy::Fixed(m) => m,
            BudgetPolicy::Capped(cap) => tree.exact_budget().min(cap),
        };
        let rule = gauss_legendre_rule(order)?;
        let part = explain_tree_direct(tree, x, &rule)?;
        for (acc, v) in total.phi.iter_mut().zip(&part.phi) {
            *acc += v;
        }
        total.budget = total.budget.max(part.budget);
        total.exact &= part.exact;
    }
    Ok(total)
}

fn explain_tree(ctx: &Ctx, a: &TreeArgs) -> Result<ExitCode> {
    let c = &a.common;
    let ensemble = load_trees(&c.model)?;
    let rows = load_instances(&c.x, ensemble.feature_count())?;
    let policy = c.budget.tree_policy(&ensemble)?;
    let outputs = rows
        .iter()
        .map(|x| {
            let attribution = if a.direct {
                explain_trees_direct(&ensemble, x, policy)?
            } else {
                explain_ensemble(&ensemble, x, policy)?
            };
            let oracle = if c.oracle {
                Some(max_abs_diff(&attribution.phi, &tree_oracle(&ensemble, x)?))
            } else {
                None
            };
            let mut out = ExplainOutput::new(attribution, Some(tree_base_value(&ensemble, x)));
            out.oracle_max_error = oracle.map(F17);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    emit_explanations(ctx, &outputs, c.tolerance)
}

fn oracle(ctx: &Ctx, a: &OracleArgs) -> Result<ExitCode> {
    let outputs = match (&a.factors, &a.model, &a.x) {
        (Some(f), _, _) => {
            let game = ProductGame::new(read_vector(f)?)?;
            check_oracle_dim(game.dim())?;
            vec![ExplainOutput::new(shapley_bruteforce(&game)?, None)]
        }
        (None, Some(model), Some(x)) => {
            let text = std::fs::read_to_string(model)
                .with_context(|| format!("reading {}", model.display()))?;
            match detect_model_kind(&text, &model.display().to_string())? {
                ModelKind::Kernel => {
                    let m = load_kernel(model)?;
                    load_instances(x, m.dim())?
                        .iter()
                        .map(|x| {
                            let phi = kernel_oracle(&m, x)?;
                            Ok(ExplainOutput::new(
                                Attribution {
                                    phi,
                                    budget: 0,
                                    exact: true,
                                },
                                Some(m.base_value()),
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                ModelKind::Trees => {
                    let e = load_trees(model)?;
                    load_instances(x, e.feature_count())?
                        .iter()
                        .map(|x| {
                            let phi = tree_oracle(&e, x)?;
                            Ok(ExplainOutput::new(
                                Attribution {
                                    phi,
                                    budget: 0,
                                    exact: true,
                                },
                                Some(tree_base_value(&e, x)),
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            }
        }
        _ => bail!("oracle needs --factors, or --model with --x"),
    };
    emit_explanations(ctx, &outputs, f64::INFINITY)
}

enum LoadedModel {
    Trees(TreeEnsemble),
    Kernel(ProductKernelModel),
}

impl LoadedModel {
    fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(
            match detect_model_kind(&text, &path.display().to_string())? {
                ModelKind::Trees => Self::Trees(load_trees(path)?),
                ModelKind::Kernel => Self::Kernel(load_kernel(path)?),
            },
        )
    }

    fn explainer(&self, budget: &BudgetArgs) -> Result<Explainer<'_>> {
        Ok(match self {
            Self::Trees(ensemble) => Explainer::Trees {
                ensemble,
                policy: budget.tree_policy(ensemble)?,
            },
            Self::Kernel(model) => Explainer::Kernel {
                model,
                budget: budget.game_order(model.dim())?,
            },
        })
    }
}

fn verify(ctx: &Ctx, a: &VerifyArgs) -> Result<ExitCode> {
    let model = LoadedModel::load(&a.model)?;
    let explainer = model.explainer(&a.budget)?;
    let data = read_matrix(&a.data)?;
    ensure!(
        !data.is_empty(),
        "{}: data file has no rows",
        a.data.display()
    );
    let phis = a.phi.as_deref().map(read_matrix).transpose()?;
    let report = run_verify(explainer, &data, phis.as_deref(), a.tolerance)?;
    if ctx.csv {
        println!("row,violation");
        for (r, v) in report.violations.iter().enumerate() {
            println!("{},{}", r + 1, format_f64(*v));
        }
    } else {
        ctx.emit_json(&Envelope {
            version: VERSION,
            config: ctx.config("verify", a)?,
            report: &report,
        })?;
    }
    eprintln!(
        "max violation {} at row {} (tolerance {:e}): {}",
        format_f64(report.max_violation),
        report.worst_row + 1,
        a.tolerance,
        if report.passed { "pass" } else { "FAIL" }
    );
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

/// Ridge-fitted rbf model and held-out rows.
fn synthetic_kernel(s: &SynthArgs) -> Result<(ProductKernelModel, Vec<Vec<f64>>)> {
    Ok(regression_kernel_model(
        s.n_train, s.features, s.rows, s.seed,
    )?)
}

fn synthetic_trees(s: &SynthArgs) -> Result<(TreeEnsemble, Vec<Vec<f64>>)> {
    let mut cfg = TreeGenConfig::new(s.features, s.depth, s.leaves);
    cfg.deep_bias = s.deep_bias;
    let ensemble = random_ensemble(&cfg, s.trees, s.seed)?;
    let data = random_instances(s.rows, s.features, -1.0, 1.0, s.seed.wrapping_add(1));
    Ok((ensemble, data))
}

fn convergence(ctx: &Ctx, a: &ConvergenceArgs) -> Result<ExitCode> {
    let game;
    let kernel;
    let data;
    let target = if let Some(f) = &a.factors {
        game = ProductGame::new(read_vector(f)?)?;
        ConvergenceTarget::Game(&game)
    } else {
        (kernel, data) = match (&a.model, &a.data) {
            (Some(m), Some(d)) => {
                let model = load_kernel(m)?;
                let rows = load_instances(d, model.dim())?;
                (model, rows)
            }
            _ => synthetic_kernel(&a.synth)?,
        };
        ConvergenceTarget::Kernel {
            model: &kernel,
            instances: &data,
        }
    };
    let d = match target {
        ConvergenceTarget::Game(g) => g.dim(),
        ConvergenceTarget::Kernel { model, .. } => model.dim(),
    };
    let budgets = a.budgets.clone().unwrap_or_else(|| default_budget_grid(d));
    let reference = a.reference.unwrap_or_else(|| d.div_ceil(2).max(1));
    let report = run_convergence(target, &budgets, reference)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    if ctx.csv {
        print!("{}", report.to_csv());
    } else {
        ctx.emit_json(&Envelope {
            version: VERSION,
            config: ctx.config("convergence", a)?,
            report: &report,
        })?;
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(ctx: &Ctx, a: &BenchArgs) -> Result<ExitCode> {
    ensure!(a.repeats >= 1, "--repeats must be at least 1");
    ensure!(
        a.timeout_s.is_finite() && a.timeout_s > 0.0,
        "--timeout-s must be positive"
    );
    let (model, data, default_id) = match (&a.model, &a.data) {
        (Some(m), Some(d)) => {
            let model = LoadedModel::load(m)?;
            let dim = match &model {
                LoadedModel::Trees(e) => e.feature_count(),
                LoadedModel::Kernel(k) => k.dim(),
            };
            let data = load_instances(d, dim)?;
            (model, data, m.display().to_string())
        }
        _ => match a.synthetic {
            SynthKind::Trees => {
                let (e, data) = synthetic_trees(&a.synth)?;
                (
                    LoadedModel::Trees(e),
                    data,
                    format!("synthetic-trees-{}", a.synth.seed),
                )
            }
            SynthKind::Kernel => {
                let (k, data) = synthetic_kernel(&a.synth)?;
                (
                    LoadedModel::Kernel(k),
                    data,
                    format!("synthetic-kernel-{}", a.synth.seed),
                )
            }
        },
    };
    let config = BenchConfig {
        model_id: a.model_id.clone().unwrap_or(default_id),
        repeats: a.repeats,
        timeout: Duration::from_secs_f64(a.timeout_s),
    };
    let row = run_bench(model.explainer(&a.budget)?, &data, &config)?;
    if ctx.csv {
        println!("{}", glshap::BenchRow::CSV_HEADER);
        println!("{}", row.to_csv());
    } else {
        ctx.emit_json(&Envelope {
            version: VERSION,
            config: ctx.config("bench", a)?,
            report: &row,
        })?;
    }
    if row.timed_out {
        eprintln!("{}: t/o", row.model_id);
    } else {
        let (m, s) = mean_std(&row.repeat_ms);
        eprintln!("{}: {:.4} ± {:.4} ms/instance", row.model_id, m, s);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn matrix_csv(rows: &[Vec<f64>]) -> String {
    rows.iter().map(|r| csv_line(r) + "\n").collect()
}

#[derive(Serialize)]
struct GenOutput {
    version: &'static str,
    config: Value,
    files: Vec<String>,
}

fn generate(ctx: &Ctx, a: &GenArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let model_path = a.out.join("model.json");
    let data_path = a.out.join("data.csv");
    let mut files = vec![model_path.clone(), data_path.clone()];
    match a.kind {
        SynthKind::Trees => {
            let (ensemble, data) = synthetic_trees(&a.synth)?;
            let json = tree_ensemble_to_json(&ensemble);
            write_file(&model_path, &serde_json::to_string_pretty(&json)?)?;
            write_file(&data_path, &matrix_csv(&data))?;
        }
        SynthKind::Kernel => {
            let (model, data) = synthetic_kernel(&a.synth)?;
            let train_path = a.out.join("train.csv");
            let json = kernel_model_to_json(&model, "train.csv");
            write_file(&model_path, &serde_json::to_string_pretty(&json)?)?;
            write_file(&train_path, &kernel_train_csv(&model))?;
            write_file(&data_path, &matrix_csv(&data))?;
            files.push(train_path);
        }
    }
    let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    if ctx.csv {
        println!("file");
        for f in &files {
            println!("{f}");
        }
    } else {
        ctx.emit_json(&GenOutput {
            version: VERSION,
            config: ctx.config("gen", a)?,
            files,
        })?;
    }
    Ok(ExitCode::SUCCESS)
}
