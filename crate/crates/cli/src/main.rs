//! `protosrl` command line: conversion, training, prediction, evaluation and the experiment matrix.
//!
//! Exit codes: 0 on success, 1 on internal failure (details in `error.log`), 2 on user or
//! configuration errors.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use protosrl::corpus::{convert_source, load_corpus, Split};
use protosrl::parallel::{with_threads, Backend};
use protosrl::predict::{head_diagnostics, predict_records, read_records, report_from_records, write_records, ReportKind};
use protosrl::synthetic::write_dataset;
use protosrl::training::{
    prepare, resolve_pipeline, run_experiment, run_matrix, Checkpoint, DataCache, ExperimentConfig, MatrixConfig,
    MatrixOptions, Resources, TaskPlan, TrainOptions, PREDICTIONS_FILE,
};
use protosrl::Error;

#[derive(Parser, Debug)]
#[command(name = "protosrl", version, about = "Joint SRL and proto-role labeling")]
struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run data-parallel work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Config file: flat `key = value` for train, TOML for matrix.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert the tab-separated source distribution into JSON-lines corpora.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        threshold: i64,
    },
    /// Train one configuration and write its checkpoint and log.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Dump predictions of a checkpoint on a corpus.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Overrides applied to the checkpoint's config (e.g. to relocate embeddings).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Score prediction dumps.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Reports to compute (srl, span, head_gold_spans, head_predicted_spans, sprl);
        /// default: every report the dumps support.
        #[arg(long, value_delimiter = ',')]
        report: Vec<String>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Consistency of predicted heads with gold argument spans.
    DiagnoseHeads {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Run the experiment matrix and render the result tables.
    Matrix {
        #[command(flatten)]
        config: ConfigArgs,
        /// Cells trained at once.
        #[arg(long)]
        jobs: Option<usize>,
        /// Subset of the standard tables, e.g. `table2,table4`.
        #[arg(long, value_delimiter = ',')]
        tables: Vec<String>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Write a small generated dataset with matching embeddings.
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 50)]
        dev: usize,
        #[arg(long, default_value_t = 50)]
        test: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 13)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Convert { .. } => "convert",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::DiagnoseHeads { .. } => "diagnose-heads",
            Command::Matrix { .. } => "matrix",
            Command::Synth { .. } => "synth",
        }
    }

    fn output_dir(&self) -> &Path {
        match self {
            Command::Convert { output_dir, .. }
            | Command::Train { output_dir, .. }
            | Command::Predict { output_dir, .. }
            | Command::Evaluate { output_dir, .. }
            | Command::DiagnoseHeads { output_dir, .. }
            | Command::Matrix { output_dir, .. }
            | Command::Synth { output_dir, .. } => output_dir,
        }
    }
}

#[derive(Debug)]
enum Failure {
    /// Bad input, config or missing artifact.
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::Shape(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::from(Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io(path, e))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn manifest(command: &str, cfg: Option<&ExperimentConfig>, extra: serde_json::Value, dir: &Path) -> Outcome {
    let m = json!({
        "command": command,
        "config_hash": cfg.map(ExperimentConfig::hash),
        "seed": cfg.map(|c| c.seed),
        "config": cfg.map(ExperimentConfig::to_map),
        "versions": {
            "protosrl": protosrl::VERSION,
            "protosrl-cli": env!("CARGO_PKG_VERSION"),
        },
        "parallel": cfg!(feature = "parallel"),
        "arguments": std::env::args().skip(1).collect::<Vec<_>>(),
        "details": extra,
    });
    write_file(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m).expect("manifest json"))
}

fn experiment_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_options(cli: &Cli) -> TrainOptions {
    TrainOptions {
        backend: if cli.sequential { Backend::Sequential } else { Backend::available() },
        ..Default::default()
    }
}

fn cmd_convert(input: &Path, out: &Path, threshold: i64) -> Outcome {
    for f in ["sentences.tsv", "propbank.tsv", "spr1.tsv"] {
        if !input.join(f).is_file() {
            return Err(Failure::User(format!("missing source file {}", input.join(f).display())));
        }
    }
    create_dir(out)?;
    let summary = convert_source(input, out, threshold)?;
    println!("split  sentences  instances  arguments  dropped sentences");
    for split in Split::ALL {
        let s = summary.split(split);
        println!(
            "{:<5}  {:>9}  {:>9}  {:>9}  {:>17}",
            split.as_str(),
            s.sentences,
            s.instances,
            s.arguments,
            s.dropped_sentences
        );
    }
    write_file(&out.join("conversion_summary.json"), &serde_json::to_string_pretty(&summary).expect("json"))?;
    manifest("convert", None, json!({ "input": input, "threshold": threshold }), out)
}

fn cmd_train(cli: &Cli, args: &ConfigArgs, out: &Path) -> Outcome {
    let cfg = experiment_config(args)?;
    create_dir(out)?;
    manifest("train", Some(&cfg), json!({}), out)?;
    let cache = DataCache::default();
    let run = run_experiment(&cfg, "train", out, &cache, None, None, &[], train_options(cli))?;
    let o = &run.outcome;
    println!(
        "best epoch {} of {} (loss {:.6}{}); checkpoint {}",
        o.best_epoch,
        o.epochs_run,
        o.best_loss,
        if o.stopped_early { ", stopped early" } else { "" },
        run.checkpoint.display()
    );
    Ok(())
}

fn cmd_predict(cli: &Cli, checkpoint: &Path, corpus: &Path, overrides: &[String], out: &Path) -> Outcome {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut cfg = ckpt.experiment_config()?;
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    let params = ckpt.params()?;
    let res = Resources::load(&cfg)?;
    if res.model_spec(&cfg) != params.spec {
        return Err(Failure::User("checkpoint does not match its config on these embeddings".into()));
    }
    let pipeline = resolve_pipeline(&cfg, None)?;
    let corpus = load_corpus(corpus, Split::Test)?;
    create_dir(out)?;
    manifest("predict", Some(&cfg), json!({ "checkpoint": checkpoint, "corpus": corpus.split.as_str() }), out)?;
    let backend = train_options(cli).backend;
    let data = prepare(&corpus, &cfg, &res, pipeline.as_ref(), backend)?;
    let tasks: Vec<_> = TaskPlan::from_config(&cfg).weights.keys().copied().collect();
    let records = predict_records(&params, &data, &tasks, backend)?;
    let path = out.join(PREDICTIONS_FILE);
    write_records(&records, &path)?;
    println!("{} predictions written to {}", records.len(), path.display());
    Ok(())
}

fn cmd_evaluate(predictions: &Path, wanted: &[String], out: &Path) -> Outcome {
    let records = read_records(predictions)?;
    let kinds: Vec<ReportKind> = if wanted.is_empty() {
        ReportKind::ALL.into_iter().filter(|k| k.available(&records)).collect()
    } else {
        wanted
            .iter()
            .map(|w| {
                ReportKind::ALL
                    .into_iter()
                    .find(|k| k.name() == w)
                    .ok_or_else(|| Failure::User(format!("unknown report `{w}`")))
            })
            .collect::<Result<_, _>>()?
    };
    if kinds.is_empty() {
        return Err(Failure::User("the dumps support no report".into()));
    }
    create_dir(out)?;
    manifest("evaluate", None, json!({ "predictions": predictions }), out)?;
    for kind in kinds {
        let r = report_from_records(&predictions.display().to_string(), kind, &records)?;
        write_file(&out.join(format!("report_{}.csv", kind.name())), &r.to_csv())?;
        println!("{:<22} micro-F1 {:>6.2}  macro-F1 {:>6.2}", kind.name(), 100.0 * r.micro_f1, 100.0 * r.macro_f1);
    }
    Ok(())
}

fn cmd_diagnose_heads(predictions: &Path, out: &Path) -> Outcome {
    let records = read_records(predictions)?;
    let d = head_diagnostics(&records);
    create_dir(out)?;
    manifest("diagnose-heads", None, json!({ "predictions": predictions }), out)?;
    let doc = json!({
        "counts": d,
        "outside_span_rate": d.outside_rate(),
        "zero_head_rate": d.zero_head_rate(),
        "multi_head_rate": d.multi_head_rate(),
    });
    write_file(&out.join("head_diagnostics.json"), &serde_json::to_string_pretty(&doc).expect("json"))?;
    println!(
        "predicted heads outside gold spans: {} of {} ({:.1}%)",
        d.heads_outside_spans,
        d.predicted_heads,
        100.0 * d.outside_rate()
    );
    println!("spans without a head: {} of {} ({:.1}%)", d.spans_without_head, d.spans, 100.0 * d.zero_head_rate());
    println!(
        "spans with several heads: {} of {} ({:.1}%)",
        d.spans_with_multiple_heads,
        d.spans,
        100.0 * d.multi_head_rate()
    );
    Ok(())
}

fn cmd_matrix(cli: &Cli, args: &ConfigArgs, jobs: Option<usize>, tables: &[String], out: &Path) -> Outcome {
    let mut cfg = match &args.config {
        Some(p) => MatrixConfig::load(p)?,
        None => MatrixConfig::default(),
    };
    cfg.overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        cfg.overrides.push(format!("seed={s}"));
    }
    if !tables.is_empty() {
        cfg.tables = Some(tables.to_vec());
    }
    let spec = cfg.spec()?;
    // Validate every cell's settings up front, apart from the pipeline paths filled in later.
    for c in &spec.cells {
        cfg.cell_config(c)?;
    }
    create_dir(out)?;
    let seed = args.seed.map(|s| s.to_string()).unwrap_or_else(|| "config".into());
    manifest("matrix", None, json!({ "tables": spec.tables.iter().map(|t| &t.id).collect::<Vec<_>>(), "seed": seed }), out)?;
    let opts = MatrixOptions {
        jobs: jobs.or(cfg.jobs).unwrap_or(1),
        train: train_options(cli),
    };
    let outcome = run_matrix(&cfg, out, &opts)?;
    for t in &outcome.tables {
        println!("{}", t.rendered.text);
    }
    let failed: Vec<_> = outcome.failures().collect();
    for c in &failed {
        if let protosrl::training::CellStatus::Failed(e) = &c.status {
            eprintln!("cell {} failed: {e}", c.id);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Internal(format!("{} of {} cells failed; see cells.csv", failed.len(), outcome.cells.len())))
    }
}

fn cmd_synth(out: &Path, sizes: [usize; 3], dim: usize, seed: u64) -> Outcome {
    let p = write_dataset(out, sizes, dim, seed)?;
    manifest("synth", None, json!({ "sizes": sizes, "dim": dim, "seed": seed }), out)?;
    println!("wrote {}, {}, {} and {}", p.train.display(), p.dev.display(), p.test.display(), p.embeddings.display());
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Convert { input, output_dir, threshold } => cmd_convert(input, output_dir, *threshold),
        Command::Train { config, output_dir } => cmd_train(cli, config, output_dir),
        Command::Predict {
            checkpoint,
            corpus,
            overrides,
            output_dir,
        } => cmd_predict(cli, checkpoint, corpus, overrides, output_dir),
        Command::Evaluate {
            predictions,
            report,
            output_dir,
        } => cmd_evaluate(predictions, report, output_dir),
        Command::DiagnoseHeads { predictions, output_dir } => cmd_diagnose_heads(predictions, output_dir),
        Command::Matrix {
            config,
            jobs,
            tables,
            output_dir,
        } => cmd_matrix(cli, config, *jobs, tables, output_dir),
        Command::Synth {
            output_dir,
            train,
            dev,
            test,
            dim,
            seed,
        } => cmd_synth(output_dir, [*train, *dev, *test], *dim, *seed),
    }
}

static LAST_PANIC: Mutex<Option<String>> = Mutex::new(None);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    std::panic::set_hook(Box::new(|info| {
        let trace = std::backtrace::Backtrace::force_capture();
        if let Ok(mut last) = LAST_PANIC.lock() {
            *last = Some(format!("{info}\n{trace}"));
        }
    }));
    let result = catch_unwind(AssertUnwindSafe(|| with_threads(cli.threads, || run(&cli)))).unwrap_or_else(|_| {
        let detail = LAST_PANIC.lock().ok().and_then(|mut l| l.take());
        Err(Failure::Internal(format!("panic: {}", detail.unwrap_or_else(|| "unknown".into()))))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            let dir = cli.command.output_dir();
            let log = if fs::create_dir_all(dir).is_ok() { dir.join("error.log") } else { PathBuf::from("error.log") };
            let text = format!(
                "protosrl {} {}\n{msg}\n",
                cli.command.name(),
                std::env::args().skip(1).collect::<Vec<_>>().join(" ")
            );
            let _ = fs::write(&log, text);
            eprintln!("internal error: {}", msg.lines().next().unwrap_or_default());
            eprintln!("details in {}", log.display());
            ExitCode::from(1)
        }
    }
}
