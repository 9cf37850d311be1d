use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ridgeless::{FeatureMap, Model};

fn ridgeless(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridgeless"))
        .args(args)
        .current_dir(dir)
        .env_remove("RIDGELESS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn metric(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {line:?}"))
        .parse()
        .unwrap()
}

#[test]
fn variance_curve_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = ridgeless(
        dir.path(),
        &[
            "experiment",
            "variance-curve",
            "--ratios",
            "0.5,2,10",
            "--output",
            "vc.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "vc.csv (3 rows)");
    let mut rdr = csv::Reader::from_path(dir.path().join("vc.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["ratio", "alpha"]);
    let alphas: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    assert_eq!(alphas.len(), 3);
    assert_eq!(alphas[0], 2.0);
    assert_eq!(alphas[1], 2.0);
    assert!((alphas[2] - 10.0 / 9.0).abs() < 1e-8);
}

#[test]
fn double_descent_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = ridgeless(
        dir.path(),
        &[
            "experiment",
            "double-descent",
            "--n-train",
            "40",
            "--n-test",
            "20",
            "--feature-counts",
            "10,40,80",
            "--lambdas",
            "0,0.01",
            "--output",
            "dd.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(dir.path().join("dd.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec![
            "M",
            "ratio",
            "lambda",
            "seed",
            "train_mse",
            "test_mse",
            "method"
        ]
    );
    let methods: Vec<String> = rdr.records().map(|r| r.unwrap()[6].to_string()).collect();
    assert_eq!(methods.iter().filter(|m| *m == "rf").count(), 30);
    assert_eq!(methods.iter().filter(|m| *m == "kernel").count(), 2);
    assert!(stdout(&out).contains("(32 rows)"));
}

#[test]
fn ridgeless_fit_interpolates_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "fit",
        "--n-train",
        "150",
        "--n-test",
        "50",
        "--features",
        "300",
        "--output",
    ];
    let a = ridgeless(dir.path(), &[&args[..], &["a.json"]].concat());
    let b = ridgeless(dir.path(), &[&args[..], &["b.json"]].concat());
    assert!(a.status.success(), "{}", stderr(&a));
    let line = stdout(&a).lines().next().unwrap().to_string();
    assert!(metric(&line, "train_mse") <= 1e-6, "{line}");
    assert_eq!(metric(&line, "M"), 300.0);
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
    assert_eq!(stdout(&a).lines().next(), stdout(&b).lines().next());
    let model: Model =
        serde_json::from_slice(&fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    assert!(matches!(model, Model::RandomFeatures(ref m) if m.feature_map.features() == 300));
}

#[test]
fn ridge_fit_reports_lambda() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["rf", "kernel-ridge"] {
        let out = ridgeless(
            dir.path(),
            &[
                "fit",
                "--method",
                method,
                "--lambda",
                "0.01",
                "--n-train",
                "100",
                "--features",
                "40",
            ],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let line = stdout(&out);
        assert_eq!(metric(&line, "lambda"), 0.01, "{line}");
    }
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "n_train = 80\nn_test = 20\nfeatures = 50\nbandwidth = 3.0\nmethod = \"rf-sgd\"\nepochs = 3\n",
    )
    .unwrap();
    let out = ridgeless(
        dir.path(),
        &[
            "fit",
            "-c",
            "run.toml",
            "--features",
            "70",
            "--feature-map-out",
            "fm.txt",
            "--trace-out",
            "trace.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert!(line.starts_with("method=rf-sgd n=80 M=70 "), "{line}");
    assert_eq!(metric(&line, "iterations"), 9.0);
    let fm =
        FeatureMap::read_text(fs::read(dir.path().join("fm.txt")).unwrap().as_slice()).unwrap();
    assert_eq!((fm.dim(), fm.features(), fm.bandwidth()), (10, 70, 3.0));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,epoch,train_loss,trace_frobenius,test_metric\n"));
    assert_eq!(trace.lines().count(), 1 + 4);
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ridgeless(dir.path(), &["experiment", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "bandwith = 2.0\n").unwrap();
    let out = ridgeless(dir.path(), &["fit", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bandwith"), "{}", stderr(&out));

    fs::write(dir.path().join("range.toml"), "features = 0\n").unwrap();
    let out = ridgeless(dir.path(), &["fit", "--config", "range.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`features`"), "{}", stderr(&out));

    let out = ridgeless(dir.path(), &["fit", "--method", "kernel-ridge"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`lambda`"), "{}", stderr(&out));
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = ridgeless(dir.path(), &["fit", "--data", "missing.libsvm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing.libsvm"));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ridgeless"))
        .args(["experiment", "variance-curve", "--ratios", "2"])
        .current_dir(dir.path())
        .env("RIDGELESS_OUT_DIR", "results")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("results/variance-curve.csv").exists());
}

#[test]
fn libsvm_classification_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..60 {
        let x = (i as f64 * 0.37).sin();
        let y = (i as f64 * 0.91).cos();
        let label = if x * y > 0.0 { "+1" } else { "-1" };
        text.push_str(&format!("{label} 1:{x} 2:{y}\n"));
    }
    fs::write(dir.path().join("toy.libsvm"), text).unwrap();
    let out = ridgeless(
        dir.path(),
        &[
            "fit",
            "--data",
            "toy.libsvm",
            "--task",
            "classification",
            "--method",
            "kernel-ridgeless",
            "--bandwidth",
            "0.5",
            "--output",
            "k.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert_eq!(metric(&line, "train_accuracy"), 1.0, "{line}");
    assert!(line.contains("n=48 "), "{line}");

    let out = ridgeless(dir.path(), &["inspect", "k.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.contains("kind: kernel"));
    assert!(summary.contains("train points: 48"));
    assert!(summary.contains("outputs: 2"));

    let out = ridgeless(
        dir.path(),
        &[
            "experiment",
            "rftk-compare",
            "--datasets",
            "toy.libsvm",
            "--replications",
            "2",
            "--epochs",
            "2",
            "--features",
            "20",
            "--output",
            "cmp.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let cmp = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert!(cmp.starts_with("dataset,method,replication,accuracy\ntoy,kernel-ridge,0,"));
    assert_eq!(cmp.lines().count(), 1 + 2 * 5);
}

#[test]
fn inspect_feature_map_record() {
    let dir = tempfile::tempdir().unwrap();
    let fm = FeatureMap::sample(3, 7, 1.5, 42).unwrap();
    fs::write(dir.path().join("fm.txt"), fm.to_text()).unwrap();
    let out = ridgeless(dir.path(), &["inspect", "fm.txt"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = stdout(&out);
    assert!(s.contains("features: 7"));
    assert!(s.contains("seed: 42"));
    assert!(s.contains("bandwidth: 1.50000000e0"));

    fs::write(dir.path().join("junk.txt"), "hello").unwrap();
    assert_eq!(
        ridgeless(dir.path(), &["inspect", "junk.txt"])
            .status
            .code(),
        Some(1)
    );
}
