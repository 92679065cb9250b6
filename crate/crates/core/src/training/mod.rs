//! Loss assembly, optimization, checkpoints, transfer and the experiment matrix.

mod checkpoint;
mod config;
mod data;
mod loss;
mod matrix;
mod optim;
mod runner;
mod trainer;

pub use self::checkpoint::{transfer_init, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use self::config::{
    EmbeddingKind, ExperimentConfig, HeadChoice, Source, SprlReduction, TaskMode, TransferMode,
};
pub use self::data::{counts_of, prepare, PipelineOutput, Prepared, Resources};
pub use self::loss::{combined_loss, Task, TaskCounts, TaskPlan};
pub use self::optim::{clip_gradient, Adam};
pub use self::trainer::{
    batch_gradient, evaluate_loss, evaluate_sums, initial_params, resolve_pipeline, train_examples, train_run,
    LogRow, TrainOptions, TrainOutcome, TrainedRun, TrainingLog,
};
pub use self::matrix::{
    run_matrix, standard_matrix, CellResult, CellSpec, CellStatus, ColumnSpec, MatrixConfig, MatrixOptions,
    MatrixOutcome, MatrixSpec, TableResult, TableSpec, TableTask, PIPELINE_PREFIX,
};
pub use self::runner::{
    evaluation_split, run_experiment, DataCache, RunArtifacts, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE, PREDICTIONS_FILE,
};
