//! One experiment end to end: load data, train, save artifacts, score the evaluation split.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::corpus::{load_corpus, Corpus, Split};
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::model::ModelParams;
use crate::predict::{predict_records, report_from_records, write_records, ReportKind};

use super::checkpoint::Checkpoint;
use super::config::{EmbeddingKind, ExperimentConfig};
use super::data::{prepare, Resources};
use super::loss::TaskPlan;
use super::trainer::{train_run, TrainOptions, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "train_log.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Corpora and embedding resources shared by runs that read the same files.
#[derive(Default)]
pub struct DataCache {
    corpora: Mutex<HashMap<(PathBuf, Split), Arc<Corpus>>>,
    resources: Mutex<HashMap<String, Arc<Resources>>>,
}

impl DataCache {
    pub fn corpus(&self, path: &Path, split: Split) -> Result<Arc<Corpus>> {
        let key = (path.to_path_buf(), split);
        if let Some(c) = self.corpora.lock().expect("corpus cache").get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(load_corpus(path, split)?);
        self.corpora.lock().expect("corpus cache").insert(key, c.clone());
        Ok(c)
    }

    pub fn resources(&self, cfg: &ExperimentConfig) -> Result<Arc<Resources>> {
        let key = match cfg.embedding_kind {
            EmbeddingKind::Static => format!("static:{}", cfg.embedding_path.as_deref().unwrap_or(Path::new("")).display()),
            EmbeddingKind::Contextual => format!("contextual:{}", cfg.contextual_model.as_deref().unwrap_or_default()),
        };
        if let Some(r) = self.resources.lock().expect("resource cache").get(&key) {
            return Ok(r.clone());
        }
        let r = Resources::load(cfg)?;
        self.resources.lock().expect("resource cache").insert(key, r.clone());
        Ok(r)
    }
}

/// Artifacts of one finished run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub outcome: TrainOutcome,
    pub checkpoint: PathBuf,
    /// Requested reports on the evaluation split (test, else dev).
    pub reports: BTreeMap<ReportKind, MetricsReport>,
}

/// Test split if configured, else dev.
pub fn evaluation_split(cfg: &ExperimentConfig) -> Option<(&Path, Split)> {
    cfg.test_data
        .as_deref()
        .map(|p| (p, Split::Test))
        .or_else(|| cfg.dev_data.as_deref().map(|p| (p, Split::Dev)))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train `cfg` and write config, log and checkpoint into `out_dir`. With `reports`, also dump
/// predictions on the evaluation split and score them.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    name: &str,
    out_dir: &Path,
    cache: &DataCache,
    pipeline: Option<ModelParams>,
    transfer_source: Option<&ModelParams>,
    reports: &[ReportKind],
    opts: TrainOptions,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let train_path = cfg
        .train_data
        .as_deref()
        .ok_or_else(|| Error::config("train_data is not set"))?;
    let res = cache.resources(cfg)?;
    let train = cache.corpus(train_path, Split::Train)?;
    let dev = match &cfg.dev_data {
        Some(p) => cache.corpus(p, Split::Dev)?,
        None => Arc::new(Corpus::new(Split::Dev, Vec::new(), Vec::new())?),
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join(CONFIG_FILE), &cfg.to_text())?;

    let run = train_run(cfg, &res, &train, &dev, pipeline, transfer_source, opts)?;
    write(&out_dir.join(LOG_FILE), &run.outcome.log.to_csv())?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    Checkpoint::new(cfg, &run.outcome.params, run.outcome.best_epoch).save(&checkpoint)?;

    let mut scored = BTreeMap::new();
    if !reports.is_empty() {
        let (path, split) =
            evaluation_split(cfg).ok_or_else(|| Error::config("evaluation needs test_data or dev_data"))?;
        let corpus = cache.corpus(path, split)?;
        let data = prepare(&corpus, cfg, &res, run.pipeline.as_ref(), opts.backend)?;
        let tasks: Vec<_> = TaskPlan::from_config(cfg).weights.keys().copied().collect();
        let records = predict_records(&run.outcome.params, &data, &tasks, opts.backend)?;
        write_records(&records, out_dir.join(PREDICTIONS_FILE))?;
        for &kind in reports {
            let mut r = report_from_records(name, kind, &records)?;
            r.config = cfg.to_map();
            write(&out_dir.join(format!("report_{}.csv", kind.name())), &r.to_csv())?;
            scored.insert(kind, r);
        }
    }
    Ok(RunArtifacts {
        outcome: run.outcome,
        checkpoint,
        reports: scored,
    })
}
