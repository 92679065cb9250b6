//! The experiment matrix: named cells grouped into result tables.
//!
//! Every cell is an [`ExperimentConfig`] built from the matrix-wide settings, the settings of its
//! embedding kind and its own overrides. Cells that read predicted spans/heads or transfer
//! weights depend on the span/head pipeline of their embedding kind, which runs first. Cells
//! with identical configs are trained once.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluation::{render_deltas, render_report, MetricsReport, RenderedTable, TableLayout};
use crate::model::ModelParams;
use crate::predict::ReportKind;

use super::checkpoint::Checkpoint;
use super::config::{EmbeddingKind, ExperimentConfig, TransferMode};
use super::runner::{run_experiment, DataCache, CHECKPOINT_FILE};
use super::trainer::TrainOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableTask {
    Srl,
    Sprl,
}

impl TableTask {
    pub fn report_kind(self) -> ReportKind {
        match self {
            TableTask::Srl => ReportKind::Srl,
            TableTask::Sprl => ReportKind::Sprl,
        }
    }
}

/// One matrix cell: a config variant and the embedding kind it runs on.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub id: String,
    pub embedding: EmbeddingKind,
    #[serde(default)]
    pub overrides: Vec<String>,
}

impl CellSpec {
    fn new(id: &str, embedding: EmbeddingKind, overrides: &[&str]) -> Self {
        CellSpec {
            id: id.to_owned(),
            embedding,
            overrides: overrides.iter().map(|s| (*s).to_owned()).collect(),
        }
    }
}

/// A table column; columns without a cell hold externally supplied numbers and render empty.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub cell: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub id: String,
    pub title: String,
    pub task: TableTask,
    pub columns: Vec<ColumnSpec>,
    /// Column that deltas are computed against.
    #[serde(default)]
    pub baseline: usize,
}

impl TableSpec {
    pub fn layout(&self) -> TableLayout {
        let columns = self.columns.iter().map(|c| c.name.clone()).collect();
        match self.task {
            TableTask::Srl => TableLayout::srl(&self.id, &self.title, columns),
            TableTask::Sprl => TableLayout::sprl(&self.id, &self.title, columns),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixSpec {
    pub cells: Vec<CellSpec>,
    pub tables: Vec<TableSpec>,
}

fn col(name: &str, cell: Option<&str>) -> ColumnSpec {
    ColumnSpec {
        name: name.to_owned(),
        cell: cell.map(str::to_owned),
    }
}

/// The four standard tables: SPRL and SRL with static embeddings, then with contextual ones.
pub fn standard_matrix() -> MatrixSpec {
    use EmbeddingKind::{Contextual, Static};
    let pred_sources = ["span_source=predicted", "head_source=predicted"];
    let cells = vec![
        // Static SPRL.
        CellSpec::new("s-sprl-only", Static, &["task_mode=sprl_only"]),
        CellSpec::new("s-mtl", Static, &["task_mode=mtl"]),
        CellSpec::new("s-mtl-gold-sh", Static, &["task_mode=mtl", "span_source=gold", "head_source=gold"]),
        CellSpec::new(
            "s-mtl-gold-sh-sent-tspan",
            Static,
            &["task_mode=mtl", "span_source=gold", "head_source=gold", "use_sentence_embedding=true", "transfer=span_weights"],
        ),
        CellSpec::new(
            "s-mtl-gold-sh-sent-tsh",
            Static,
            &[
                "task_mode=mtl",
                "span_source=gold",
                "head_source=gold",
                "use_sentence_embedding=true",
                "transfer=span_and_head_weights",
            ],
        ),
        CellSpec::new(
            "s-mtl-pred-sh-sent-tsh",
            Static,
            &[
                "task_mode=mtl",
                pred_sources[0],
                pred_sources[1],
                "sprl_heads=predicted",
                "use_sentence_embedding=true",
                "transfer=span_and_head_weights",
            ],
        ),
        // Static SRL.
        CellSpec::new("s-srl-only", Static, &["task_mode=srl_only"]),
        CellSpec::new("s-srl-gold-s", Static, &["task_mode=srl_only", "span_source=gold"]),
        CellSpec::new("s-srl-gold-sh", Static, &["task_mode=srl_only", "span_source=gold", "head_source=gold"]),
        CellSpec::new("s-srl-pred-s", Static, &["task_mode=srl_only", pred_sources[0]]),
        CellSpec::new("s-srl-pred-sh", Static, &["task_mode=srl_only", pred_sources[0], pred_sources[1]]),
        CellSpec::new("s-mtl-gold-s", Static, &["task_mode=mtl", "span_source=gold"]),
        CellSpec::new("s-mtl-pred-s", Static, &["task_mode=mtl", pred_sources[0]]),
        CellSpec::new("s-mtl-pred-sh", Static, &["task_mode=mtl", pred_sources[0], pred_sources[1]]),
        // Contextual SPRL.
        CellSpec::new("c-sprl-only-lstm", Contextual, &["task_mode=sprl_only", "cell_kind=lstm_like"]),
        CellSpec::new("c-sprl-only-lr", Contextual, &["task_mode=sprl_only", "cell_kind=identity"]),
        CellSpec::new("c-mtl", Contextual, &["task_mode=mtl"]),
        CellSpec::new("c-mtl-sent", Contextual, &["task_mode=mtl", "use_sentence_embedding=true"]),
        CellSpec::new(
            "c-mtl-predhead-sent",
            Contextual,
            &["task_mode=mtl", "sprl_heads=predicted", "use_sentence_embedding=true"],
        ),
        // Contextual SRL.
        CellSpec::new("c-srl-only", Contextual, &["task_mode=srl_only"]),
        CellSpec::new("c-srl-gold-s", Contextual, &["task_mode=srl_only", "span_source=gold"]),
        CellSpec::new("c-srl-gold-sh", Contextual, &["task_mode=srl_only", "span_source=gold", "head_source=gold"]),
        CellSpec::new("c-srl-pred-s", Contextual, &["task_mode=srl_only", pred_sources[0]]),
        CellSpec::new("c-srl-pred-sh", Contextual, &["task_mode=srl_only", pred_sources[0], pred_sources[1]]),
        CellSpec::new("c-mtl-pred-sh", Contextual, &["task_mode=mtl", pred_sources[0], pred_sources[1]]),
    ];
    let tables = vec![
        TableSpec {
            id: "table1".into(),
            title: "SPRL F1, static embeddings".into(),
            task: TableTask::Sprl,
            columns: vec![
                col("External system A", None),
                col("External system B", None),
                col("SPRL-only, gold heads", Some("s-sprl-only")),
                col("MTL baseline, gold heads", Some("s-mtl")),
                col("MTL, gold spans + heads", Some("s-mtl-gold-sh")),
                col("MTL, shared span wts, gold spans + heads + sent", Some("s-mtl-gold-sh-sent-tspan")),
                col("MTL, shared span + head wts, gold spans + heads + sent", Some("s-mtl-gold-sh-sent-tsh")),
                col("MTL, predicted spans + heads + sent", Some("s-mtl-pred-sh-sent-tsh")),
            ],
            baseline: 2,
        },
        TableSpec {
            id: "table2".into(),
            title: "SRL F1, static embeddings".into(),
            task: TableTask::Srl,
            columns: vec![
                col("SRL-only baseline", Some("s-srl-only")),
                col("SRL-only, gold spans", Some("s-srl-gold-s")),
                col("SRL-only, gold spans + heads", Some("s-srl-gold-sh")),
                col("SRL-only, predicted spans", Some("s-srl-pred-s")),
                col("SRL-only, predicted spans + heads", Some("s-srl-pred-sh")),
                col("MTL baseline", Some("s-mtl")),
                col("MTL, gold spans", Some("s-mtl-gold-s")),
                col("MTL, gold spans + heads", Some("s-mtl-gold-sh")),
                col("MTL, predicted spans", Some("s-mtl-pred-s")),
                col("MTL, predicted spans + heads", Some("s-mtl-pred-sh")),
            ],
            baseline: 0,
        },
        TableSpec {
            id: "table3".into(),
            title: "SPRL F1, contextual embeddings".into(),
            task: TableTask::Sprl,
            columns: vec![
                col("SPRL-only, biLSTM + gold head", Some("c-sprl-only-lstm")),
                col("SPRL-only, LR + gold head", Some("c-sprl-only-lr")),
                col("MTL, GRU + gold head", Some("c-mtl")),
                col("MTL, GRU + gold head + sentence emb.", Some("c-mtl-sent")),
                col("MTL, GRU + predicted head + sentence emb.", Some("c-mtl-predhead-sent")),
            ],
            baseline: 0,
        },
        TableSpec {
            id: "table4".into(),
            title: "SRL F1, contextual embeddings (BiGRU)".into(),
            task: TableTask::Srl,
            columns: vec![
                col("SRL-only baseline", Some("c-srl-only")),
                col("SRL-only, gold spans", Some("c-srl-gold-s")),
                col("SRL-only, gold spans + heads", Some("c-srl-gold-sh")),
                col("SRL-only, predicted spans", Some("c-srl-pred-s")),
                col("SRL-only, predicted spans + heads", Some("c-srl-pred-sh")),
                col("MTL, predicted spans + heads", Some("c-mtl-pred-sh")),
            ],
            baseline: 0,
        },
    ];
    MatrixSpec { cells, tables }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
enum Scalar {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Scalar {
    fn render(&self) -> String {
        match self {
            Scalar::Str(s) => s.clone(),
            Scalar::Int(i) => i.to_string(),
            Scalar::Float(f) => f.to_string(),
            Scalar::Bool(b) => b.to_string(),
        }
    }
}

/// Matrix settings file (TOML).
///
/// ```toml
/// tables = ["table2"]          # subset of the standard tables
/// [common]                     # applied to every cell
/// train_data = "data/train.jsonl"
/// [static]
/// embedding_path = "glove.txt"
/// [contextual]
/// contextual_model = "cache:bert"
/// ```
///
/// `[[table]]` and `[[cell]]` entries replace the standard tables with custom ones.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default)]
    common: BTreeMap<String, Scalar>,
    #[serde(default, rename = "static")]
    static_settings: BTreeMap<String, Scalar>,
    #[serde(default)]
    contextual: BTreeMap<String, Scalar>,
    #[serde(default)]
    pub tables: Option<Vec<String>>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub cell: Vec<CellSpec>,
    #[serde(default)]
    pub table: Vec<TableSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
    /// Extra `key=value` overrides applied to every cell after the file's own settings.
    #[serde(skip)]
    pub overrides: Vec<String>,
}

impl MatrixConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("matrix config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn set_common(&mut self, key: &str, value: &str) {
        self.common.insert(key.to_owned(), Scalar::Str(value.to_owned()));
    }

    pub fn set_for(&mut self, kind: EmbeddingKind, key: &str, value: &str) {
        let m = match kind {
            EmbeddingKind::Static => &mut self.static_settings,
            EmbeddingKind::Contextual => &mut self.contextual,
        };
        m.insert(key.to_owned(), Scalar::Str(value.to_owned()));
    }

    /// Cells and tables to run: custom ones if given, else the (filtered) standard matrix.
    pub fn spec(&self) -> Result<MatrixSpec> {
        let spec = if self.table.is_empty() && self.cell.is_empty() {
            let mut m = standard_matrix();
            if let Some(wanted) = &self.tables {
                for w in wanted {
                    if !m.tables.iter().any(|t| &t.id == w) {
                        return Err(Error::config(format!("unknown table `{w}`")));
                    }
                }
                m.tables.retain(|t| wanted.contains(&t.id));
                let used: Vec<&str> = m
                    .tables
                    .iter()
                    .flat_map(|t| t.columns.iter().filter_map(|c| c.cell.as_deref()))
                    .collect();
                let used: Vec<String> = used.into_iter().map(str::to_owned).collect();
                m.cells.retain(|c| used.contains(&c.id));
            }
            m
        } else {
            MatrixSpec {
                cells: self.cell.clone(),
                tables: self.table.clone(),
            }
        };
        spec.check()?;
        Ok(spec)
    }

    /// The experiment config of a cell, before pipeline paths are filled in.
    pub fn cell_config(&self, cell: &CellSpec) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig {
            embedding_kind: cell.embedding,
            ..Default::default()
        };
        let kind = match cell.embedding {
            EmbeddingKind::Static => &self.static_settings,
            EmbeddingKind::Contextual => &self.contextual,
        };
        for (k, v) in self.common.iter().chain(kind) {
            cfg.set(k, &v.render())
                .map_err(|e| Error::config(format!("cell {}: {e}", cell.id)))?;
        }
        cfg.apply_overrides(&self.overrides)?;
        cfg.apply_overrides(&cell.overrides)
            .map_err(|e| Error::config(format!("cell {}: {e}", cell.id)))?;
        if let Some(dir) = &self.base_dir {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }
}

impl MatrixSpec {
    fn check(&self) -> Result<()> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if seen.contains(&&c.id) {
                return Err(Error::config(format!("duplicate cell id `{}`", c.id)));
            }
            if c.id.starts_with(PIPELINE_PREFIX) || c.id.contains(['/', '\\']) || c.id.is_empty() {
                return Err(Error::config(format!("invalid cell id `{}`", c.id)));
            }
            seen.push(&c.id);
        }
        for t in &self.tables {
            if t.columns.is_empty() || t.baseline >= t.columns.len() {
                return Err(Error::config(format!("table {}: bad columns or baseline", t.id)));
            }
            for c in t.columns.iter().filter_map(|c| c.cell.as_ref()) {
                if !seen.contains(&c) {
                    return Err(Error::config(format!("table {} refers to unknown cell `{c}`", t.id)));
                }
            }
        }
        Ok(())
    }
}

pub const PIPELINE_PREFIX: &str = "pipeline-";

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Done,
    /// Same config as an earlier cell; results are shared.
    SameAs(String),
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub id: String,
    pub status: CellStatus,
    pub config_hash: Option<String>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds: f64,
    pub reports: BTreeMap<ReportKind, MetricsReport>,
}

impl CellResult {
    fn failed(id: &str, message: String) -> Self {
        CellResult {
            id: id.to_owned(),
            status: CellStatus::Failed(message),
            config_hash: None,
            best_epoch: 0,
            epochs_run: 0,
            seconds: 0.0,
            reports: BTreeMap::new(),
        }
    }

    pub fn report(&self, kind: ReportKind) -> Option<&MetricsReport> {
        self.reports.get(&kind)
    }

    pub fn is_ok(&self) -> bool {
        !matches!(self.status, CellStatus::Failed(_))
    }
}

#[derive(Clone, Debug)]
pub struct TableResult {
    pub spec: TableSpec,
    pub rendered: RenderedTable,
    pub deltas: Option<String>,
}

#[derive(Clone, Debug)]
pub struct MatrixOutcome {
    /// Pipeline cells first, then matrix cells in spec order.
    pub cells: Vec<CellResult>,
    pub tables: Vec<TableResult>,
}

impl MatrixOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| !c.is_ok())
    }

    pub fn cell(&self, id: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.id == id)
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let row = |w: &mut csv::Writer<Vec<u8>>, r: &[String]| w.write_record(r).expect("in-memory write");
        row(
            &mut w,
            &["cell", "status", "config_hash", "best_epoch", "epochs_run", "seconds", "report", "micro_f1", "macro_f1", "error"]
                .map(String::from),
        );
        for c in &self.cells {
            let (status, error) = match &c.status {
                CellStatus::Done => ("done".to_owned(), String::new()),
                CellStatus::SameAs(o) => (format!("same_as:{o}"), String::new()),
                CellStatus::Failed(e) => ("failed".to_owned(), e.clone()),
            };
            let mut scores: Vec<(String, String, String)> = c
                .reports
                .iter()
                .map(|(k, r)| (k.name().to_owned(), r.micro_f1.to_string(), r.macro_f1.to_string()))
                .collect();
            if scores.is_empty() {
                scores.push(Default::default());
            }
            for (kind, micro, macro_) in scores {
                row(
                    &mut w,
                    &[
                        c.id.clone(),
                        status.clone(),
                        c.config_hash.clone().unwrap_or_default(),
                        c.best_epoch.to_string(),
                        c.epochs_run.to_string(),
                        format!("{:.3}", c.seconds),
                        kind,
                        micro,
                        macro_,
                        error.clone(),
                    ],
                );
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[derive(Clone, Debug)]
pub struct MatrixOptions {
    /// Cells trained at once.
    pub jobs: usize,
    pub train: TrainOptions,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            jobs: 1,
            train: TrainOptions::default(),
        }
    }
}

struct Job {
    id: String,
    cfg: ExperimentConfig,
    reports: Vec<ReportKind>,
    pipeline: Option<String>,
}

fn run_jobs<'a>(jobs: &'a [Job], workers: usize, f: impl Fn(&'a Job) -> CellResult + Sync) -> Vec<CellResult> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let r = catch_unwind(AssertUnwindSafe(|| f(job)))
                    .unwrap_or_else(|_| CellResult::failed(&job.id, "internal panic".into()));
                results.lock().expect("results")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn run_job(job: &Job, out_dir: &Path, cache: &DataCache, pipelines: &HashMap<String, ModelParams>, opts: &MatrixOptions) -> CellResult {
    let start = Instant::now();
    let pipeline = match &job.pipeline {
        None => None,
        Some(p) => match pipelines.get(p) {
            Some(params) => Some(params),
            None => return CellResult::failed(&job.id, format!("pipeline {p} is unavailable")),
        },
    };
    let transfer = if job.cfg.transfer != TransferMode::None { pipeline } else { None };
    let pipe_input = if job.cfg.needs_pipeline() { pipeline.cloned() } else { None };
    match run_experiment(&job.cfg, &job.id, &out_dir.join(&job.id), cache, pipe_input, transfer, &job.reports, opts.train) {
        Ok(a) => CellResult {
            id: job.id.clone(),
            status: CellStatus::Done,
            config_hash: Some(job.cfg.hash()),
            best_epoch: a.outcome.best_epoch,
            epochs_run: a.outcome.epochs_run,
            seconds: start.elapsed().as_secs_f64(),
            reports: a.reports,
        },
        Err(e) => {
            log::warn!("cell {} failed: {e}", job.id);
            CellResult::failed(&job.id, e.to_string())
        }
    }
}

/// Train every cell into `out_dir/cells/<id>` and render the tables into `out_dir/tables`.
/// Failed cells are recorded and leave empty columns; the other cells still run.
pub fn run_matrix(cfg: &MatrixConfig, out_dir: &Path, opts: &MatrixOptions) -> Result<MatrixOutcome> {
    let spec = cfg.spec()?;
    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;

    // Cell configs; configuration errors fail the cell, not the matrix.
    let mut cell_cfgs: Vec<(String, std::result::Result<ExperimentConfig, String>, Vec<ReportKind>)> = Vec::new();
    let report_of = |id: &str| {
        let mut kinds: Vec<ReportKind> = spec
            .tables
            .iter()
            .filter(|t| t.columns.iter().any(|c| c.cell.as_deref() == Some(id)))
            .map(|t| t.task.report_kind())
            .collect();
        kinds.sort();
        kinds.dedup();
        kinds
    };
    for c in &spec.cells {
        let kind = report_of(&c.id);
        cell_cfgs.push((c.id.clone(), cfg.cell_config(c).map_err(|e| e.to_string()), kind));
    }

    // One span/head pipeline per embedding kind that needs it.
    let mut pipeline_jobs = Vec::new();
    for &kind in EmbeddingKind::ALL {
        let needed = spec.cells.iter().zip(&cell_cfgs).any(|(c, (_, r, _))| {
            c.embedding == kind
                && r.as_ref().is_ok_and(|x| {
                    (x.needs_pipeline() && x.pipeline_checkpoint.is_none())
                        || (x.transfer != TransferMode::None && x.transfer_checkpoint.is_none())
                })
        });
        if !needed {
            continue;
        }
        let base = CellSpec::new(&format!("{PIPELINE_PREFIX}{kind}"), kind, &[]);
        let mut p = cfg.cell_config(&base)?;
        p.apply_overrides(&[
            "task_mode=span_head",
            "span_source=none",
            "head_source=none",
            "sprl_heads=gold",
            "transfer=none",
            "use_span_embedding=false",
            "use_sentence_embedding=false",
            "joint_pipeline=false",
        ])?;
        p.pipeline_checkpoint = None;
        p.transfer_checkpoint = None;
        pipeline_jobs.push(Job {
            id: base.id,
            cfg: p,
            reports: vec![ReportKind::Span, ReportKind::HeadGoldSpans, ReportKind::HeadPredictedSpans],
            pipeline: None,
        });
    }
    let cache = DataCache::default();
    let no_pipelines = HashMap::new();
    let mut results = run_jobs(&pipeline_jobs, opts.jobs, |j| run_job(j, &cells_dir, &cache, &no_pipelines, opts));
    let mut pipelines = HashMap::new();
    for (job, r) in pipeline_jobs.iter().zip(&results) {
        if r.is_ok() {
            let ckpt = cells_dir.join(&job.id).join(CHECKPOINT_FILE);
            if let Ok(params) = Checkpoint::load(&ckpt).and_then(|c| c.params()) {
                pipelines.insert(job.id.clone(), params);
            }
        }
    }

    // Fill pipeline paths, then deduplicate identical configs.
    let mut jobs = Vec::new();
    let mut aliases: Vec<(String, String)> = Vec::new();
    let mut failed_early = Vec::new();
    let mut by_hash: HashMap<String, String> = HashMap::new();
    for (c, (id, r, report)) in spec.cells.iter().zip(cell_cfgs) {
        let mut x = match r {
            Ok(x) => x,
            Err(e) => {
                failed_early.push(CellResult::failed(id.as_str(), e));
                continue;
            }
        };
        let pipe_id = format!("{PIPELINE_PREFIX}{}", c.embedding);
        let pipe_ckpt = cells_dir.join(&pipe_id).join(CHECKPOINT_FILE);
        let mut uses_pipeline = false;
        if x.needs_pipeline() && x.pipeline_checkpoint.is_none() {
            x.pipeline_checkpoint = Some(pipe_ckpt.clone());
            uses_pipeline = true;
        }
        if x.transfer != TransferMode::None && x.transfer_checkpoint.is_none() {
            x.transfer_checkpoint = Some(pipe_ckpt);
            uses_pipeline = true;
        }
        let hash = x.hash();
        if let Some(first) = by_hash.get(&hash) {
            aliases.push((id, first.clone()));
            continue;
        }
        by_hash.insert(hash, id.clone());
        jobs.push(Job {
            id,
            cfg: x,
            reports: report,
            pipeline: uses_pipeline.then_some(pipe_id),
        });
    }
    let cell_results = run_jobs(&jobs, opts.jobs, |j| run_job(j, &cells_dir, &cache, &pipelines, opts));

    let mut by_id: HashMap<String, CellResult> = cell_results
        .into_iter()
        .chain(failed_early)
        .map(|r| (r.id.clone(), r))
        .collect();
    for (id, first) in aliases {
        let mut r = by_id[&first].clone();
        r.id = id.clone();
        if r.is_ok() {
            r.status = CellStatus::SameAs(first);
        }
        by_id.insert(id, r);
    }
    for c in &spec.cells {
        results.push(by_id.remove(&c.id).expect("every cell has a result"));
    }
    let outcome_cells = results;

    let tables_dir = out_dir.join("tables");
    fs::create_dir_all(&tables_dir).map_err(|e| Error::io(&tables_dir, e))?;
    let mut tables = Vec::new();
    for t in &spec.tables {
        let layout = t.layout();
        let reports: Vec<Option<&MetricsReport>> = t
            .columns
            .iter()
            .map(|c| {
                c.cell
                    .as_deref()
                    .and_then(|id| outcome_cells.iter().find(|r| r.id == id))
                    .and_then(|r| r.report(t.task.report_kind()))
            })
            .collect();
        let rendered = render_report(&layout, &reports)?;
        let deltas = render_deltas(&layout, &reports, t.baseline).ok();
        let write = |name: String, text: &str| {
            let p = tables_dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write(format!("{}.csv", t.id), &rendered.csv)?;
        write(format!("{}.txt", t.id), &rendered.text)?;
        if let Some(d) = &deltas {
            write(format!("{}_deltas.txt", t.id), d)?;
        }
        tables.push(TableResult {
            spec: t.clone(),
            rendered,
            deltas,
        });
    }
    let outcome = MatrixOutcome {
        cells: outcome_cells,
        tables,
    };
    let summary = out_dir.join("cells.csv");
    fs::write(&summary, outcome.summary_csv()).map_err(|e| Error::io(&summary, e))?;
    Ok(outcome)
}
