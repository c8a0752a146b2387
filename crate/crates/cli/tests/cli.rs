//! End-to-end checks of the command-line contract: exit codes, file outputs,
//! reproducibility of primary outputs.

use std::path::Path;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oob-forest"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn datagen_then_train_then_ci() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("friedman.csv");
    let model = dir.path().join("forest.model");
    let records = dir.path().join("ci.txt");

    let out = run(&[
        "datagen", "--process", "friedman", "--n", "120", "--seed", "7", "--out",
        path_str(&csv),
    ]);
    assert!(out.status.success());
    assert!(csv.exists());

    let out = run(&[
        "train",
        "--data",
        path_str(&csv),
        "--target",
        "y",
        "--task",
        "regression",
        "--trees",
        "150",
        "--seed",
        "3",
        "--model-out",
        path_str(&model),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("oob estimate:"), "{stdout}");
    let estimate: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("oob estimate: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(estimate > 0.0);

    let out = run(&[
        "ci",
        "--model",
        path_str(&model),
        "--data",
        path_str(&csv),
        "--target",
        "y",
        "--task",
        "regression",
        "--levels",
        "0.90,0.95,0.99",
        "--replicates",
        "500",
        "--seed",
        "9",
        "--out",
        path_str(&records),
    ]);
    assert!(out.status.success());

    // Three nested record lines: `level lower upper point M seed`.
    let text = std::fs::read_to_string(&records).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(' ').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.len(), 6);
        assert!(row[1] <= row[3] && row[3] <= row[2], "point inside interval");
        assert_eq!(row[4], 500.0);
        assert_eq!(row[5], 9.0);
    }
    assert!(rows[0][1] >= rows[1][1] && rows[1][1] >= rows[2][1]);
    assert!(rows[0][2] <= rows[1][2] && rows[1][2] <= rows[2][2]);
}

#[test]
fn primary_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("spheres.csv");
    run(&[
        "datagen", "--process", "spheres", "--n", "80", "--seed", "5", "--out",
        path_str(&csv),
    ]);

    let mut models = Vec::new();
    let mut records = Vec::new();
    for tag in ["a", "b"] {
        let model = dir.path().join(format!("model-{tag}"));
        let rec = dir.path().join(format!("ci-{tag}"));
        let out = run(&[
            "train",
            "--data",
            path_str(&csv),
            "--target",
            "y",
            "--task",
            "classification",
            "--trees",
            "60",
            "--seed",
            "11",
            "--model-out",
            path_str(&model),
        ]);
        assert!(out.status.success());
        let out = run(&[
            "ci",
            "--model",
            path_str(&model),
            "--data",
            path_str(&csv),
            "--target",
            "y",
            "--task",
            "classification",
            "--replicates",
            "200",
            "--seed",
            "13",
            "--out",
            path_str(&rec),
        ]);
        assert!(out.status.success());
        models.push(std::fs::read(&model).unwrap());
        records.push(std::fs::read(&rec).unwrap());
    }
    assert_eq!(models[0], models[1], "model files differ between runs");
    assert_eq!(records[0], records[1], "CI records differ between runs");
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");

    // Usage error: unknown flag.
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // Usage error: invalid flag value, caught before any I/O.
    let out = run(&[
        "train",
        "--data",
        "/definitely/missing.csv",
        "--target",
        "y",
        "--task",
        "regression",
        "--trees",
        "0",
        "--model-out",
        path_str(&model),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Data error: missing file, message names the path.
    let out = run(&[
        "train",
        "--data",
        "/definitely/missing.csv",
        "--target",
        "y",
        "--task",
        "regression",
        "--model-out",
        path_str(&model),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("/definitely/missing.csv"), "{stderr}");

    // Success and --help both exit 0.
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    // M = 1 is rejected by flag validation.
    let out = run(&[
        "ci",
        "--data",
        "/x.csv",
        "--target",
        "y",
        "--task",
        "regression",
        "--replicates",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // simulate with replications = 0 is a usage error.
    let out = run(&["simulate", "--process", "friedman", "--replications", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_documents_every_subcommand() {
    for sub in ["train", "ci", "simulate", "datagen"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--seed") || sub == "datagen", "{sub}: {text}");
    }
}

#[test]
fn default_level_grid_has_19_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let txt = dir.path().join("grid.txt");
    let out = run(&[
        "simulate",
        "--process",
        "friedman",
        "--n",
        "40",
        "--n-test",
        "200",
        "--trees",
        "15",
        "--replicates",
        "40",
        "--replications",
        "3",
        "--seed",
        "1",
        "--out-csv",
        path_str(&csv),
        "--out-text",
        path_str(&txt),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let data_rows = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("process,"))
        .count();
    assert_eq!(data_rows, 19, "default grid is 0.05..0.95 step 0.05");
}

#[test]
fn single_level_simulate_writes_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let txt = dir.path().join("r.txt");
    let out = run(&[
        "simulate",
        "--process",
        "friedman",
        "--n",
        "50",
        "--n-test",
        "300",
        "--trees",
        "20",
        "--replicates",
        "50",
        "--replications",
        "4",
        "--levels",
        "0.9",
        "--seed",
        "2",
        "--out-csv",
        path_str(&csv),
        "--out-text",
        path_str(&txt),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let data_rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("process,"))
        .collect();
    assert_eq!(data_rows.len(), 1);
    assert!(data_rows[0].starts_with("friedman,50,0.9,"));
}
