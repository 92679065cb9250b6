use protosrl::evaluation::parse_table_csv;
use protosrl::synthetic::write_dataset;
use protosrl::training::{run_matrix, CellStatus, MatrixConfig, MatrixOptions};

fn reduced_config(dir: &std::path::Path) -> MatrixConfig {
    let data = write_dataset(&dir.join("data"), [16, 6, 6], 8, 2).unwrap();
    let text = format!(
        "[common]\ntrain_data = \"{}\"\ndev_data = \"{}\"\ntest_data = \"{}\"\nhidden_dim = 3\nmax_epochs = 2\nbatch_size = 8\n\
         [static]\nembedding_path = \"{}\"\n[contextual]\ncontextual_model = \"toy:6\"\n",
        data.train.display(),
        data.dev.display(),
        data.test.display(),
        data.embeddings.display()
    );
    MatrixConfig::parse(&text).unwrap()
}

#[test]
fn reduced_matrix_reproduces_table_structure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_config(dir.path());
    let out = run_matrix(&cfg, &dir.path().join("out"), &MatrixOptions { jobs: 3, ..Default::default() }).unwrap();
    let failures: Vec<_> = out.failures().map(|c| (&c.id, &c.status)).collect();
    assert!(failures.is_empty(), "{failures:?}");
    let shapes: Vec<(usize, usize)> = out
        .tables
        .iter()
        .map(|t| {
            let v = parse_table_csv(&t.rendered.csv).unwrap();
            (v.rows.len(), v.columns.len() + 1)
        })
        .collect();
    assert_eq!(shapes, [(20, 9), (16, 11), (20, 6), (16, 7)]);
    // Pipelines for both embedding kinds, then the 25 matrix cells.
    assert_eq!(out.cells.len(), 27);
    for t in ["table1", "table2", "table3", "table4"] {
        assert!(dir.path().join("out/tables").join(format!("{t}.txt")).exists());
    }
    assert!(dir.path().join("out/cells.csv").exists());
}

#[test]
fn failing_cell_does_not_stop_others() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reduced_config(dir.path());
    cfg.tables = Some(vec!["table3".into()]);
    cfg.set_for(protosrl::training::EmbeddingKind::Contextual, "contextual_model", "toy:0");
    let out = run_matrix(&cfg, &dir.path().join("out"), &MatrixOptions::default()).unwrap();
    assert!(out.cells.iter().all(|c| !c.is_ok()));
    let v = parse_table_csv(&out.tables[0].rendered.csv).unwrap();
    assert!(v.rows.iter().all(|(_, vals)| vals.iter().all(Option::is_none)));
}

#[test]
fn identical_cells_train_once_and_deltas_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reduced_config(dir.path());
    let custom = MatrixConfig::parse(
        r#"
[[cell]]
id = "base"
embedding = "static"
overrides = ["task_mode=srl_only"]

[[cell]]
id = "again"
embedding = "static"
overrides = ["task_mode=srl_only", "seed=13"]

[[cell]]
id = "gold"
embedding = "static"
overrides = ["task_mode=srl_only", "span_source=gold", "head_source=gold"]

[[table]]
id = "mini"
title = "Mini"
task = "srl"
columns = [{ name = "baseline", cell = "base" }, { name = "repeat", cell = "again" }, { name = "gold", cell = "gold" }]
"#,
    )
    .unwrap();
    cfg.cell = custom.cell;
    cfg.table = custom.table;
    let out = run_matrix(&cfg, &dir.path().join("out"), &MatrixOptions::default()).unwrap();
    assert_eq!(out.cells.len(), 3);
    assert_eq!(out.cell("again").unwrap().status, CellStatus::SameAs("base".into()));
    assert!(!dir.path().join("out/cells/again").exists());
    let deltas = out.tables[0].deltas.as_ref().unwrap();
    assert!(deltas.contains("gold (vs baseline)"));
    assert!(deltas.lines().any(|l| l.starts_with("B-A0")));
}
