//! Minibatch training with early stopping on the combined dev loss.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::encoder::Mode;
use crate::error::{Error, Result};
use crate::model::{example_rng, Example, ModelParams, TaskSums};
use crate::parallel::{map_chunks, Backend, DEFAULT_CHUNK};

use super::checkpoint::{transfer_init, Checkpoint};
use super::config::{ExperimentConfig, TransferMode};
use super::data::{counts_of, prepare, Prepared, Resources};
use super::loss::{Task, TaskPlan};
use super::optim::{clip_gradient, Adam};

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub task: String,
    pub split: String,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    fn record(&mut self, epoch: usize, split: &str, losses: &BTreeMap<Task, f64>, total: f64) {
        for (task, loss) in losses {
            self.rows.push(LogRow {
                epoch,
                task: task.name().to_owned(),
                split: split.to_owned(),
                loss: *loss,
            });
        }
        self.rows.push(LogRow {
            epoch,
            task: "total".to_owned(),
            split: split.to_owned(),
            loss: total,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,task,split,loss\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.task, r.split, r.loss));
        }
        out
    }

    /// Total loss per epoch for one split.
    pub fn totals(&self, split: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.task == "total")
            .map(|r| r.loss)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub params: ModelParams,
    /// 1-based epoch of the best validation loss; 0 if no epoch ran.
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub log: TrainingLog,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub backend: Backend,
    pub chunk: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            backend: Backend::available(),
            chunk: DEFAULT_CHUNK,
        }
    }
}

/// Summed eval-mode losses over `examples`.
pub fn evaluate_sums(params: &ModelParams, plan: &TaskPlan, cfg: &ExperimentConfig, examples: &[Example], opts: TrainOptions) -> Result<TaskSums> {
    let counts = counts_of(examples);
    let obj = plan.objective(&counts, cfg.head_tagger_input);
    let parts = map_chunks(opts.backend, examples, opts.chunk, |_, chunk| -> Result<TaskSums> {
        let mut sums = TaskSums::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for ex in chunk {
            sums.add(&params.loss_and_gradient(ex, &obj, Mode::Eval, &mut rng, None)?);
        }
        Ok(sums)
    });
    let mut total = TaskSums::default();
    for p in parts {
        total.add(&p?);
    }
    Ok(total)
}

/// Mean-reduced per-task losses and their weighted total.
pub fn evaluate_loss(
    params: &ModelParams,
    plan: &TaskPlan,
    cfg: &ExperimentConfig,
    examples: &[Example],
    opts: TrainOptions,
) -> Result<(BTreeMap<Task, f64>, f64)> {
    let sums = evaluate_sums(params, plan, cfg, examples, opts)?;
    let losses = plan.task_losses(&sums, &counts_of(examples));
    let total = plan.total(&losses)?;
    Ok((losses, total))
}

/// Gradient of the mean-reduced batch loss, reduced in fixed chunk order.
pub fn batch_gradient(
    params: &ModelParams,
    plan: &TaskPlan,
    cfg: &ExperimentConfig,
    examples: &[Example],
    batch: &[usize],
    epoch: usize,
    opts: TrainOptions,
) -> Result<(ModelParams, TaskSums)> {
    let counts = counts_of(batch.iter().map(|&i| &examples[i]));
    let obj = plan.objective(&counts, cfg.head_tagger_input);
    let parts = map_chunks(opts.backend, batch, opts.chunk, |_, idx| -> Result<(ModelParams, TaskSums)> {
        let mut grad = params.zeros_like();
        let mut sums = TaskSums::default();
        for &i in idx {
            let mut rng = example_rng(cfg.seed, epoch, i);
            sums.add(&params.loss_and_gradient(&examples[i], &obj, Mode::Train, &mut rng, Some(&mut grad))?);
        }
        Ok((grad, sums))
    });
    let mut iter = parts.into_iter();
    let (mut grad, mut sums) = iter.next().unwrap_or_else(|| Ok((params.zeros_like(), TaskSums::default())))?;
    for p in iter {
        let (g, s) = p?;
        grad.add_assign(&g);
        sums.add(&s);
    }
    Ok((grad, sums))
}

/// Optimize `init` on `train`, selecting the epoch with the lowest combined `dev` loss
/// (training loss when `dev` is empty).
pub fn train_examples(
    cfg: &ExperimentConfig,
    init: ModelParams,
    train: &[Example],
    dev: &[Example],
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let plan = TaskPlan::from_config(cfg);
    if plan.weights.is_empty() {
        return Err(Error::config("config trains no task"));
    }
    let mut params = init;
    let mut opt = Adam::new(&params, cfg.learning_rate);
    let mut log = TrainingLog::default();
    let mut best = (params.clone(), 0usize, f64::INFINITY);
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(epoch as u64);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let (mut grad, sums) = batch_gradient(&params, &plan, cfg, train, batch, epoch, opts)?;
            if !sums.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "non-finite training loss".into(),
                });
            }
            let norm = clip_gradient(&mut grad, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "non-finite gradient norm".into(),
                });
            }
            opt.update(&mut params, &grad);
        }
        epochs_run = epoch;

        let (train_losses, train_total) = evaluate_loss(&params, &plan, cfg, train, opts)?;
        log.record(epoch, "train", &train_losses, train_total);
        let selection = if dev.is_empty() {
            train_total
        } else {
            let (dev_losses, dev_total) = evaluate_loss(&params, &plan, cfg, dev, opts)?;
            log.record(epoch, "dev", &dev_losses, dev_total);
            dev_total
        };
        if !selection.is_finite() {
            return Err(Error::Divergence {
                epoch,
                what: "non-finite validation loss".into(),
            });
        }
        log::debug!("epoch {epoch}: train {train_total:.5} selection {selection:.5}");
        if selection < best.2 {
            best = (params.clone(), epoch, selection);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        best_epoch: best.1,
        best_loss: best.2,
        epochs_run,
        stopped_early,
        log,
    })
}

/// Fresh parameters for `cfg`, with transfer applied from `source` or the configured checkpoint.
pub fn initial_params(cfg: &ExperimentConfig, res: &Resources, source: Option<&ModelParams>) -> Result<ModelParams> {
    let spec = res.model_spec(cfg);
    let mut params = ModelParams::init(&spec, cfg.seed)?;
    if cfg.transfer != TransferMode::None {
        let loaded;
        let src = match source {
            Some(s) => s,
            None => {
                let path = cfg
                    .transfer_checkpoint
                    .as_ref()
                    .ok_or_else(|| Error::config("transfer needs transfer_checkpoint"))?;
                loaded = Checkpoint::load(path)?.params()?;
                &loaded
            }
        };
        transfer_init(&mut params, src, cfg.transfer)?;
    }
    Ok(params)
}

/// Load the configured pipeline checkpoint if the config needs one and none was supplied.
pub fn resolve_pipeline(cfg: &ExperimentConfig, given: Option<ModelParams>) -> Result<Option<ModelParams>> {
    if !cfg.needs_pipeline() {
        return Ok(None);
    }
    if given.is_some() {
        return Ok(given);
    }
    match &cfg.pipeline_checkpoint {
        Some(p) => Ok(Some(Checkpoint::load(p)?.params()?)),
        None => Err(Error::config(
            "predicted spans/heads need pipeline_checkpoint or joint_pipeline = true",
        )),
    }
}

pub struct TrainedRun {
    pub outcome: TrainOutcome,
    pub train: Prepared,
    pub dev: Prepared,
    pub pipeline: Option<ModelParams>,
}

/// Prepare data and train one configuration end to end.
pub fn train_run(
    cfg: &ExperimentConfig,
    res: &Resources,
    train: &Corpus,
    dev: &Corpus,
    pipeline: Option<ModelParams>,
    transfer_source: Option<&ModelParams>,
    opts: TrainOptions,
) -> Result<TrainedRun> {
    cfg.validate()?;
    let pipeline = resolve_pipeline(cfg, pipeline)?;
    let train_set = prepare(train, cfg, res, pipeline.as_ref(), opts.backend)?;
    let dev_set = prepare(dev, cfg, res, pipeline.as_ref(), opts.backend)?;
    let init = initial_params(cfg, res, transfer_source)?;
    let outcome = train_examples(cfg, init, &train_set.examples, &dev_set.examples, opts)?;
    Ok(TrainedRun {
        outcome,
        train: train_set,
        dev: dev_set,
        pipeline,
    })
}
