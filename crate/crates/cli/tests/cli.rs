use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use protosrl::evaluation::MetricsReport;

fn protosrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protosrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = protosrl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy_setup(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--output-dir", s(&data), "--train", "24", "--dev", "8", "--test", "8", "--dim", "8"]);
    let cfg = dir.join("toy.conf");
    fs::write(
        &cfg,
        "# toy run\ntask_mode = mtl\nembedding_path = data/embeddings.txt\ntrain_data = data/train.jsonl\n\
         dev_data = data/dev.jsonl\nhidden_dim = 4\nmax_epochs = 3\nbatch_size = 8\n",
    )
    .unwrap();
    cfg
}

#[test]
fn train_predict_evaluate_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_setup(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--seed", "5", "--output-dir", s(&run)]);
    for f in ["checkpoint.json", "train_log.csv", "config.txt", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(fs::read_to_string(run.join("train_log.csv")).unwrap().starts_with("epoch,task,split,loss\n"));

    let pred = dir.path().join("pred");
    let test = dir.path().join("data/test.jsonl");
    ok(&["predict", "--checkpoint", s(&run.join("checkpoint.json")), "--corpus", s(&test), "--output-dir", s(&pred)]);
    let dumps = pred.join("predictions.jsonl");
    assert_eq!(fs::read_to_string(&dumps).unwrap().lines().count(), 8);

    let eval = dir.path().join("eval");
    let stdout = ok(&["evaluate", "--predictions", s(&dumps), "--output-dir", s(&eval)]);
    assert!(stdout.contains("srl") && stdout.contains("sprl"));
    let srl = MetricsReport::from_csv(&fs::read_to_string(eval.join("report_srl.csv")).unwrap()).unwrap();
    assert_eq!(srl.labels.len(), 14);

    let diag = dir.path().join("diag");
    ok(&["diagnose-heads", "--predictions", s(&dumps), "--output-dir", s(&diag)]);
    let d: serde_json::Value = serde_json::from_str(&fs::read_to_string(diag.join("head_diagnostics.json")).unwrap()).unwrap();
    assert!(d["counts"]["spans"].as_u64().unwrap() > 0);
}

#[test]
fn same_config_and_seed_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_setup(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["train", "--config", s(&cfg), "--output-dir", s(&a)]);
    ok(&["train", "--config", s(&cfg), "--output-dir", s(&b), "--sequential"]);
    for f in ["checkpoint.json", "train_log.csv", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn user_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_setup(dir.path());
    let out = dir.path().join("out");
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--config", "/nonexistent.conf", "--output-dir", s(&out)],
        vec!["train", "--config", s(&cfg), "--set", "threshold=9", "--output-dir", s(&out)],
        vec!["train", "--config", s(&cfg), "--set", "no_such_key=1", "--output-dir", s(&out)],
        vec!["convert", "--input", s(dir.path()), "--output-dir", s(&out)],
        vec!["predict", "--checkpoint", "/missing.json", "--corpus", "/missing.jsonl", "--output-dir", s(&out)],
        vec!["evaluate", "--predictions", "/missing.jsonl", "--output-dir", s(&out)],
    ];
    for args in cases {
        let o = protosrl(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    // Validation happens before side effects.
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn evaluate_rejects_missing_metric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_setup(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--set", "task_mode=srl_only", "--output-dir", s(&run)]);
    let pred = dir.path().join("pred");
    ok(&[
        "predict",
        "--checkpoint",
        s(&run.join("checkpoint.json")),
        "--corpus",
        s(&dir.path().join("data/dev.jsonl")),
        "--output-dir",
        s(&pred),
    ]);
    let o = protosrl(&["evaluate", "--predictions", s(&pred.join("predictions.jsonl")), "--report", "sprl", "--output-dir", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn matrix_table_subset() {
    let dir = tempfile::tempdir().unwrap();
    toy_setup(dir.path());
    let m = dir.path().join("matrix.toml");
    fs::write(
        &m,
        "[common]\ntrain_data = \"data/train.jsonl\"\ndev_data = \"data/dev.jsonl\"\ntest_data = \"data/test.jsonl\"\n\
         hidden_dim = 3\nmax_epochs = 2\n[contextual]\ncontextual_model = \"toy:6\"\n",
    )
    .unwrap();
    let out = dir.path().join("m");
    let stdout = ok(&["matrix", "--config", s(&m), "--tables", "table3", "--jobs", "2", "--output-dir", s(&out)]);
    assert!(stdout.contains("MTL, GRU + predicted head + sentence emb."));
    let csv = fs::read_to_string(out.join("tables/table3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(out.join("manifest.json").exists());
}
