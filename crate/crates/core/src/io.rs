//! File formats: tree and kernel model JSON, instance matrices, and
//! 17-significant-digit number emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, ProductKernelModel};
use crate::tree::{TreeEnsemble, TreeModel, TreeNode};

/// Formats `x` with 17 significant digits, enough to round-trip any double.
/// Non-finite values print as `NaN`, `inf` or `-inf`.
pub fn format_f64(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0" } else { "0.0" }.to_string();
    }
    format!("{x:.16e}")
}

/// A double that serializes as a 17-significant-digit JSON number, or
/// `null` when not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(format_f64(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

pub fn f17(values: &[f64]) -> Vec<F17> {
    values.iter().copied().map(F17).collect()
}

/// `serialize_with` helper for a single `f64` field.
pub fn serialize_f17<S: Serializer>(
    x: &f64,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    F17(*x).serialize(serializer)
}

/// `serialize_with` helper for `Vec<f64>` fields.
pub fn serialize_f17_vec<S: Serializer>(
    v: &[f64],
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    f17(v).serialize(serializer)
}

/// `serialize_with` helper for `Vec<Vec<f64>>` fields.
pub fn serialize_f17_matrix<S: Serializer>(
    rows: &[Vec<f64>],
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<F17>> = rows.iter().map(|r| f17(r)).collect();
    rows.serialize(serializer)
}

/// One CSV line of 17-digit numbers.
pub fn csv_line(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", format_f64(*v));
    }
    s
}

fn parse_error(source_name: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        message: message.into(),
    }
}

fn json_number(v: &Value, source_name: &str, what: impl Fn() -> String) -> Result<f64> {
    v.as_f64().ok_or_else(|| {
        parse_error(
            source_name,
            format!("{}: expected a number, found {v}", what()),
        )
    })
}

/// Rows of numbers from JSON (`[[..], ..]` or a single `[..]`) or headerless
/// CSV. Every row must have the same width.
pub fn parse_matrix(text: &str, source_name: &str) -> Result<Vec<Vec<f64>>> {
    let rows = if text.trim_start().starts_with('[') {
        let value: Value =
            serde_json::from_str(text).map_err(|e| parse_error(source_name, e.to_string()))?;
        let outer = value
            .as_array()
            .ok_or_else(|| parse_error(source_name, "expected a JSON array"))?;
        if outer.iter().all(Value::is_array) {
            outer
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    row.as_array()
                        .expect("checked")
                        .iter()
                        .enumerate()
                        .map(|(c, v)| {
                            json_number(v, source_name, || {
                                format!("row {}, column {}", r + 1, c + 1)
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            let row = outer
                .iter()
                .enumerate()
                .map(|(c, v)| json_number(v, source_name, || format!("element {}", c + 1)))
                .collect::<Result<Vec<f64>>>()?;
            vec![row]
        }
    } else {
        parse_csv(text, source_name)?
    };
    if let Some(first) = rows.first() {
        let width = first.len();
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(parse_error(
                source_name,
                format!("row {} has {} columns, expected {width}", r + 1, row.len()),
            ));
        }
    }
    Ok(rows)
}

fn parse_csv(text: &str, source_name: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(source_name, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().map_err(|_| {
                    parse_error(
                        source_name,
                        format!(
                            "row {}, column {}: cannot parse {field:?} as a number",
                            r + 1,
                            c + 1
                        ),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// A single vector: a JSON array, a one-column CSV, or a one-row CSV.
pub fn parse_vector(text: &str, source_name: &str) -> Result<Vec<f64>> {
    let rows = parse_matrix(text, source_name)?;
    match rows.as_slice() {
        [] => Err(parse_error(source_name, "no values")),
        [row] => Ok(row.clone()),
        _ if rows.iter().all(|r| r.len() == 1) => Ok(rows.into_iter().map(|r| r[0]).collect()),
        _ => Err(parse_error(
            source_name,
            "expected a single row or a single column of numbers",
        )),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_matrix(&read_text(path)?, &path.display().to_string())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&read_text(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// Tree models

#[derive(Debug, Deserialize)]
struct TreeModelFile {
    feature_count: usize,
    trees: Vec<TreeFile>,
}

#[derive(Debug, Deserialize)]
struct TreeFile {
    #[serde(default)]
    root: usize,
    nodes: Vec<Map<String, Value>>,
}

const SPLIT_KEYS: [&str; 5] = ["feature", "threshold", "left", "right", "left_fraction"];

fn node_from_json(obj: &Map<String, Value>, tree: usize, id: usize, src: &str) -> Result<TreeNode> {
    let at = |msg: String| parse_error(src, format!("tree {tree}, node {id}: {msg}"));
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    if keys == ["value"] {
        let value = obj["value"]
            .as_f64()
            .ok_or_else(|| at("leaf value must be a number".into()))?;
        return Ok(TreeNode::Leaf { value });
    }
    let mut sorted_keys = keys.clone();
    sorted_keys.sort_unstable();
    let mut expected = SPLIT_KEYS.to_vec();
    expected.sort_unstable();
    if sorted_keys != expected {
        return Err(at(format!(
            "expected a leaf {{value}} or a binary split {{{}}}, found keys {keys:?}",
            SPLIT_KEYS.join(", ")
        )));
    }
    let index = |k: &str| {
        obj[k]
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| at(format!("{k} must be a non-negative integer")))
    };
    let number = |k: &str| {
        obj[k]
            .as_f64()
            .ok_or_else(|| at(format!("{k} must be a number")))
    };
    Ok(TreeNode::Split {
        feature: index("feature")?,
        threshold: number("threshold")?,
        left: index("left")?,
        right: index("right")?,
        left_fraction: number("left_fraction")?,
    })
}

/// Parses the tree-ensemble JSON schema and validates every tree.
pub fn parse_tree_ensemble(text: &str, source_name: &str) -> Result<TreeEnsemble> {
    let file: TreeModelFile =
        serde_json::from_str(text).map_err(|e| parse_error(source_name, e.to_string()))?;
    let trees = file
        .trees
        .iter()
        .enumerate()
        .map(|(t, tree)| {
            let nodes = tree
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| node_from_json(n, t, id, source_name))
                .collect::<Result<Vec<_>>>()?;
            TreeModel::new(nodes, tree.root, file.feature_count).map_err(|e| match e {
                Error::InvalidModel(msg) => Error::InvalidModel(format!("tree {t}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TreeEnsemble::new(file.feature_count, trees)
}

pub fn load_tree_ensemble(path: &Path) -> Result<TreeEnsemble> {
    parse_tree_ensemble(&read_text(path)?, &path.display().to_string())
}

/// The tree-ensemble JSON document for `ensemble`.
pub fn tree_ensemble_to_json(ensemble: &TreeEnsemble) -> Value {
    let trees: Vec<Value> = ensemble
        .trees()
        .iter()
        .map(|t| {
            let nodes: Vec<Value> = t
                .nodes()
                .iter()
                .map(|n| match *n {
                    TreeNode::Leaf { value } => serde_json::json!({ "value": value }),
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        left_fraction,
                    } => serde_json::json!({
                        "feature": feature,
                        "threshold": threshold,
                        "left": left,
                        "right": right,
                        "left_fraction": left_fraction,
                    }),
                })
                .collect();
            serde_json::json!({ "root": t.root(), "nodes": nodes })
        })
        .collect();
    serde_json::json!({ "feature_count": ensemble.feature_count(), "trees": trees })
}

// ---------------------------------------------------------------------------
// Kernel models

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(self, d: usize) -> Vec<f64> {
        match self {
            Self::One(v) => vec![v; d],
            Self::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelFileSpec {
    family: String,
    lengthscales: Option<OneOrMany>,
    gamma: Option<OneOrMany>,
    degree: Option<u32>,
    offset: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TrainSource {
    Path(String),
    Inline(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelModelFile {
    alpha: Vec<f64>,
    #[serde(default)]
    intercept: f64,
    kernel: KernelFileSpec,
    train: TrainSource,
}

fn kernel_spec(spec: KernelFileSpec, d: usize) -> Result<KernelSpec> {
    let invalid = |m: &str| Error::InvalidModel(m.to_string());
    match spec.family.as_str() {
        "rbf" => match (spec.lengthscales, spec.gamma) {
            (Some(l), None) => Ok(KernelSpec::Rbf {
                lengthscales: l.expand(d),
            }),
            (None, Some(g)) => KernelSpec::rbf_from_gamma(&g.expand(d)),
            _ => Err(invalid(
                "rbf kernel needs exactly one of lengthscales or gamma",
            )),
        },
        "laplace" => Ok(KernelSpec::Laplace {
            lengthscales: spec
                .lengthscales
                .ok_or_else(|| invalid("laplace kernel needs lengthscales"))?
                .expand(d),
        }),
        "polynomial" | "polynomial-per-dim" => Ok(KernelSpec::Polynomial {
            degree: spec
                .degree
                .ok_or_else(|| invalid("polynomial kernel needs degree"))?,
            offset: spec.offset.unwrap_or(0.0),
        }),
        other => Err(Error::InvalidModel(format!(
            "unknown kernel family {other:?}"
        ))),
    }
}

/// Parses a kernel model; a `train` path is resolved against `base_dir`.
pub fn parse_kernel_model(
    text: &str,
    source_name: &str,
    base_dir: &Path,
) -> Result<ProductKernelModel> {
    let file: KernelModelFile =
        serde_json::from_str(text).map_err(|e| parse_error(source_name, e.to_string()))?;
    let train = match file.train {
        TrainSource::Inline(rows) => rows,
        TrainSource::Path(p) => read_matrix(&base_dir.join(p))?,
    };
    let d = train.first().map_or(0, Vec::len);
    let kernel = kernel_spec(file.kernel, d)?;
    ProductKernelModel::new(file.alpha, train, kernel, file.intercept)
}

pub fn load_kernel_model(path: &Path) -> Result<ProductKernelModel> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_kernel_model(&read_text(path)?, &path.display().to_string(), base)
}

/// Kernel model JSON referring to a training CSV at `train_path`.
pub fn kernel_model_to_json(model: &ProductKernelModel, train_path: &str) -> Value {
    let kernel = match model.kernel() {
        KernelSpec::Rbf { lengthscales } => {
            serde_json::json!({ "family": "rbf", "lengthscales": lengthscales })
        }
        KernelSpec::Laplace { lengthscales } => {
            serde_json::json!({ "family": "laplace", "lengthscales": lengthscales })
        }
        KernelSpec::Polynomial { degree, offset } => {
            serde_json::json!({ "family": "polynomial-per-dim", "degree": degree, "offset": offset })
        }
    };
    serde_json::json!({
        "alpha": model.alpha(),
        "intercept": model.intercept(),
        "kernel": kernel,
        "train": train_path,
    })
}

/// Headerless CSV of the training matrix.
pub fn kernel_train_csv(model: &ProductKernelModel) -> String {
    (0..model.n_train())
        .map(|i| csv_line(model.train_row(i)) + "\n")
        .collect()
}

/// Whether a model document describes trees or a kernel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Trees,
    Kernel,
}

pub fn detect_model_kind(text: &str, source_name: &str) -> Result<ModelKind> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| parse_error(source_name, e.to_string()))?;
    match (value.get("trees"), value.get("alpha")) {
        (Some(_), None) => Ok(ModelKind::Trees),
        (None, Some(_)) => Ok(ModelKind::Kernel),
        _ => Err(parse_error(
            source_name,
            "model must contain either \"trees\" or \"alpha\"",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(format_f64(0.0), "0.0");
        let x = 0.1 + 0.2;
        assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        let json = serde_json::to_string(&f17(&[1.0, f64::NAN])).unwrap();
        assert_eq!(json, "[1.0000000000000000e0,null]");
    }

    #[test]
    fn vectors_from_json_and_csv() {
        assert_eq!(
            parse_vector("[1, 2.5, -3]", "t").unwrap(),
            vec![1.0, 2.5, -3.0]
        );
        assert_eq!(
            parse_vector("1\n2.5\n-3\n", "t").unwrap(),
            vec![1.0, 2.5, -3.0]
        );
        assert_eq!(
            parse_vector("1, 2.5, -3\n", "t").unwrap(),
            vec![1.0, 2.5, -3.0]
        );
        assert!(parse_vector("1,2\n3,4\n", "t").is_err());
        assert!(parse_vector("", "t").is_err());
    }

    #[test]
    fn csv_errors_carry_position() {
        let err = parse_matrix("1,2\n3,x\n", "data.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
        let err = parse_matrix("1,2\n3\n", "data.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 2 has 1 columns"), "{err}");
    }

    #[test]
    fn tree_schema() {
        let text = r#"{"feature_count": 2, "trees": [{"root": 0, "nodes": [
            {"feature": 1, "threshold": 0.5, "left": 1, "right": 2, "left_fraction": 0.25},
            {"value": -1.0}, {"value": 3.0}]}]}"#;
        let e = parse_tree_ensemble(text, "m.json").unwrap();
        assert_eq!(e.trees().len(), 1);
        assert_eq!(e.predict(&[0.0, 0.7]), 3.0);
        let again = parse_tree_ensemble(&tree_ensemble_to_json(&e).to_string(), "r").unwrap();
        assert_eq!(again, e);

        let multi = r#"{"feature_count": 1, "trees": [{"nodes": [
            {"feature": 0, "threshold": 0.0, "children": [1, 2, 3]}, {"value": 1}]}]}"#;
        let err = parse_tree_ensemble(multi, "m.json")
            .unwrap_err()
            .to_string();
        assert!(err.contains("tree 0, node 0"), "{err}");
    }

    #[test]
    fn kernel_schema_with_gamma_and_inline_train() {
        let text = r#"{"alpha": [1.0, -0.5], "intercept": 0.25,
            "kernel": {"family": "rbf", "gamma": 0.5}, "train": [[0, 1], [1, 0]]}"#;
        let m = parse_kernel_model(text, "k.json", Path::new(".")).unwrap();
        assert_eq!(m.dim(), 2);
        match m.kernel() {
            KernelSpec::Rbf { lengthscales } => assert_eq!(lengthscales, &vec![1.0, 1.0]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(m.intercept(), 0.25);
    }

    #[test]
    fn kernel_schema_with_train_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("train.csv"), "0,1\n1,0\n").unwrap();
        let text = r#"{"alpha": [1.0, 2.0],
            "kernel": {"family": "laplace", "lengthscales": [1, 2]}, "train": "train.csv"}"#;
        let path = dir.path().join("model.json");
        std::fs::write(&path, text).unwrap();
        let m = load_kernel_model(&path).unwrap();
        assert_eq!(m.train_row(1), &[1.0, 0.0]);
        assert_eq!(detect_model_kind(text, "k").unwrap(), ModelKind::Kernel);
    }
}
