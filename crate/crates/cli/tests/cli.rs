use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn glshap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glshap"))
        .args(args)
        .env_remove("GLSHAP_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    assert_eq!(
        code(out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn generated(kind: &str, extra: &[&str]) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    let mut args = vec!["gen", kind, "--out", &out];
    args.extend_from_slice(extra);
    let report = json(&glshap(&args));
    assert_eq!(report["config"]["synth"]["seed"], 0);
    let path = dir.path().to_path_buf();
    (dir, path)
}

#[test]
fn rule_reports_nodes_and_weights() {
    let v = json(&glshap(&["rule", "--order", "3"]));
    assert_eq!(v["order"], 3);
    let nodes = floats(&v["nodes"]);
    let weights = floats(&v["weights"]);
    assert_eq!(nodes.len(), 3);
    assert!((nodes[1] - 0.5).abs() < 1e-15);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    assert_eq!(code(&glshap(&["rule", "--order", "0"])), 1);
    assert_eq!(code(&glshap(&["rule", "--order", "11", "--cap", "10"])), 1);
}

#[test]
fn explain_game_matches_hand_values() {
    let dir = TempDir::new().unwrap();
    let u = write(dir.path(), "u.json", "[0.5, 2, -1, 3]");
    let v = json(&glshap(&["explain-game", "--factors", &u, "--oracle"]));
    let phi = floats(&v["phi"]);
    for (got, want) in phi.iter().zip([5.0 / 12.0, -1.0 / 12.0, -13.0 / 3.0, 0.0]) {
        assert!((got - want).abs() < 1e-14, "{phi:?}");
    }
    assert_eq!(v["budget"], 2);
    assert_eq!(v["exact"], true);
    assert!(v["oracle_max_error"].as_f64().unwrap() < 1e-12);

    let v = json(&glshap(&["explain-game", "--factors", &u, "--budget", "1"]));
    assert_eq!(v["exact"], false);
    let csv = write(dir.path(), "u.csv", "2\n3\n");
    let out = glshap(&["--csv", "explain-game", "--factors", &csv, "--exact"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phi_0,phi_1,budget,exact"));
    assert_eq!(
        lines.next(),
        Some("2.0000000000000000e0,3.0000000000000000e0,1,true")
    );
}

#[test]
fn emitted_numbers_carry_17_digits_and_round_trip() {
    let dir = TempDir::new().unwrap();
    let u = write(dir.path(), "u.json", "[0.3, 1.7, -2.2, 0.9, 2.5]");
    let out = glshap(&["explain-game", "--factors", &u]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    // Pretty-printed arrays put one number per line.
    let numbers: Vec<&str> = text
        .lines()
        .map(|l| l.trim().trim_end_matches(','))
        .filter(|l| l.contains('e') && l.parse::<f64>().is_ok())
        .collect();
    assert_eq!(numbers.len(), 5, "{text}");
    for raw in numbers {
        let mantissa = raw.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{raw}");
        let parsed: f64 = raw.parse().unwrap();
        assert_eq!(glshap::io::format_f64(parsed), raw);
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&glshap(&["no-such-command"])), 1);
    assert_eq!(code(&glshap(&["explain-game"])), 1);
    assert_eq!(
        code(&glshap(&[
            "explain-game",
            "--factors",
            "/no/such/file.json"
        ])),
        1
    );
    let dir = TempDir::new().unwrap();
    let u = write(dir.path(), "u.json", "[2, 3]");
    assert_eq!(
        code(&glshap(&[
            "explain-game",
            "--factors",
            &u,
            "--budget",
            "2",
            "--exact"
        ])),
        1
    );
    assert_eq!(
        code(&glshap(&[
            "explain-game",
            "--factors",
            &u,
            "--budget",
            "500"
        ])),
        1
    );
    let bad = write(dir.path(), "bad.csv", "1,2\n3,oops\n");
    let out = glshap(&["explain-game", "--factors", &bad]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
    assert_eq!(code(&glshap(&["--help"])), 0);
    assert_eq!(code(&glshap(&["--version"])), 0);
}

#[test]
fn verify_passes_fails_and_rejects_empty_data() {
    let (_dir, path) = generated("trees", &["--features", "6", "--rows", "5"]);
    let model = path.join("model.json");
    let data = path.join("data.csv");
    let (model, data) = (model.to_str().unwrap(), data.to_str().unwrap());

    let report = json(&glshap(&["verify", "--model", model, "--data", data]));
    assert_eq!(report["report"]["passed"], true);
    assert_eq!(report["report"]["rows"], 5);
    assert!(report["report"]["max_violation"].as_f64().unwrap() <= 1e-9);

    // Explain the same rows, then perturb one coordinate by 1.0.
    let explained = json(&glshap(&["explain-tree", "--model", model, "--x", data]));
    let mut phis: Vec<Vec<f64>> = explained
        .as_array()
        .unwrap()
        .iter()
        .map(|row| floats(&row["phi"]))
        .collect();
    let good: String = phis
        .iter()
        .map(|r| glshap::io::csv_line(r) + "\n")
        .collect();
    let good = write(&path, "phi.csv", &good);
    assert_eq!(
        code(&glshap(&[
            "verify", "--model", model, "--data", data, "--phi", &good
        ])),
        0
    );
    phis[2][3] += 1.0;
    let bad: String = phis
        .iter()
        .map(|r| glshap::io::csv_line(r) + "\n")
        .collect();
    let bad = write(&path, "phi_bad.csv", &bad);
    let out = glshap(&["verify", "--model", model, "--data", data, "--phi", &bad]);
    assert_eq!(code(&out), 2);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["report"]["passed"], false);
    assert_eq!(report["report"]["worst_row"], 2);

    let empty = write(&path, "empty.csv", "");
    assert_eq!(
        code(&glshap(&["verify", "--model", model, "--data", &empty])),
        1
    );
}

#[test]
fn kernel_explanations_add_up_to_predictions() {
    let (_dir, path) = generated(
        "kernel",
        &["--features", "5", "--rows", "4", "--n-train", "20"],
    );
    let model = path.join("model.json");
    let data = path.join("data.csv");
    let (model, data) = (model.to_str().unwrap(), data.to_str().unwrap());
    let rows = json(&glshap(&["explain-kernel", "--model", model, "--x", data]));
    assert_eq!(rows.as_array().unwrap().len(), 4);
    for row in rows.as_array().unwrap() {
        assert!(row["base_value"].is_number());
        assert_eq!(row["exact"], true);
    }
    let report = json(&glshap(&["verify", "--model", model, "--data", data]));
    assert_eq!(report["report"]["passed"], true);
}

#[test]
fn thread_count_does_not_change_output() {
    let (_dir, path) = generated(
        "trees",
        &["--features", "12", "--trees", "30", "--rows", "20"],
    );
    let model = path.join("model.json");
    let data = path.join("data.csv");
    let run = |threads: &str| {
        let out = glshap(&[
            "--threads",
            threads,
            "--csv",
            "explain-tree",
            "--model",
            model.to_str().unwrap(),
            "--x",
            data.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("2"));
    assert_eq!(one, run("4"));

    let env = Command::new(env!("CARGO_BIN_EXE_glshap"))
        .args([
            "--csv",
            "explain-tree",
            "--model",
            model.to_str().unwrap(),
            "--x",
        ])
        .arg(&data)
        .env("GLSHAP_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(env.stdout, one);
}

#[test]
fn direct_and_dfs_tree_paths_agree() {
    let (_dir, path) = generated("trees", &["--features", "8", "--rows", "6"]);
    let model = path.join("model.json");
    let data = path.join("data.csv");
    let args = [
        "explain-tree",
        "--model",
        model.to_str().unwrap(),
        "--x",
        data.to_str().unwrap(),
    ];
    let dfs = json(&glshap(&args));
    let mut direct_args = args.to_vec();
    direct_args.push("--direct");
    let direct = json(&glshap(&direct_args));
    for (a, b) in dfs
        .as_array()
        .unwrap()
        .iter()
        .zip(direct.as_array().unwrap())
    {
        for (x, y) in floats(&a["phi"]).iter().zip(floats(&b["phi"])) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn bench_reports_repeats_and_determinism() {
    let v = json(&glshap(&[
        "bench",
        "--synthetic",
        "trees",
        "--repeats",
        "3",
        "--rows",
        "5",
    ]));
    let report = &v["report"];
    assert_eq!(report["repeats"], 3);
    assert_eq!(report["repeat_ms"].as_array().unwrap().len(), 3);
    assert_eq!(report["deterministic"], true);
    assert_eq!(report["timed_out"], false);
    assert!(report["max_violation"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["config"]["synth"]["seed"], 0);
    assert!(v["version"].is_string());

    let out = glshap(&[
        "--csv",
        "bench",
        "--synthetic",
        "kernel",
        "--repeats",
        "2",
        "--rows",
        "3",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with("model_id,instances,repeats,threads,mean_ms,std_ms"),
        "{text}"
    );
    assert_eq!(code(&glshap(&["bench", "--repeats", "0"])), 1);
}

#[test]
fn convergence_examples() {
    let dir = TempDir::new().unwrap();
    let ones = write(dir.path(), "ones.json", "[1, 1, 1, 1, 1, 1]");
    let v = json(&glshap(&[
        "convergence",
        "--factors",
        &ones,
        "--budgets",
        "1,2,3",
    ]));
    assert!(floats(&v["report"]["mean_error"]).iter().all(|&e| e == 0.0));

    let v = json(&glshap(&[
        "convergence",
        "--features",
        "50",
        "--rows",
        "3",
        "--budgets",
        "2,3,5,25",
        "--reference",
        "25",
    ]));
    let report = &v["report"];
    assert_eq!(report["reference_exact"], true);
    let e = floats(&report["mean_error"]);
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    assert!(e[3] <= 1e-14, "{e:?}");

    let v = json(&glshap(&[
        "convergence",
        "--factors",
        &ones,
        "--budgets",
        "1",
        "--reference",
        "2",
    ]));
    assert_eq!(v["report"]["reference_exact"], false);
    assert!(v["report"]["warning"].is_string());
    assert_eq!(
        code(&glshap(&[
            "convergence",
            "--factors",
            &ones,
            "--budgets",
            "3,2"
        ])),
        1
    );
}

#[test]
fn oracle_subcommand_agrees_with_explain() {
    let dir = TempDir::new().unwrap();
    let u = write(dir.path(), "u.json", "[0.2, 1.4, -0.7, 2.9, 0.0, 1.1, 3.3]");
    let oracle = json(&glshap(&["oracle", "--factors", &u]));
    let quad = json(&glshap(&["explain-game", "--factors", &u]));
    for (a, b) in floats(&oracle["phi"]).iter().zip(floats(&quad["phi"])) {
        assert!((a - b).abs() < 1e-12);
    }
}
