//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::LabelPolicy;
use crate::encoder::{CellKind, EncoderConfig};
use crate::error::{Error, Result};
use crate::model::HeadInput;

macro_rules! keyword_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::config(format!(
                        "unknown {} `{s}` (expected one of: {})",
                        stringify!($name),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

keyword_enum!(TaskMode {
    SrlOnly => "srl_only",
    SprlOnly => "sprl_only",
    Mtl => "mtl",
    SpanHead => "span_head",
});

keyword_enum!(EmbeddingKind {
    Static => "static",
    Contextual => "contextual",
});

keyword_enum!(
    /// Where auxiliary span or head features for the SRL tagger come from.
    Source {
        None => "none",
        Gold => "gold",
        Predicted => "predicted",
    }
);

keyword_enum!(
    /// Which head word represents an argument in the proto-role pair.
    HeadChoice {
        Gold => "gold",
        Predicted => "predicted",
    }
);

keyword_enum!(TransferMode {
    None => "none",
    SpanWeights => "span_weights",
    SpanAndHeadWeights => "span_and_head_weights",
});

keyword_enum!(
    /// How the 18 per-property losses combine.
    SprlReduction {
        Sum => "sum",
        Mean => "mean",
    }
);

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task_mode: TaskMode,
    pub embedding_kind: EmbeddingKind,
    pub embedding_path: Option<PathBuf>,
    pub contextual_model: Option<String>,
    pub train_data: Option<PathBuf>,
    pub dev_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub span_source: Source,
    pub head_source: Source,
    pub sprl_heads: HeadChoice,
    pub use_span_embedding: bool,
    pub use_sentence_embedding: bool,
    pub transfer: TransferMode,
    pub transfer_checkpoint: Option<PathBuf>,
    pub pipeline_checkpoint: Option<PathBuf>,
    pub joint_pipeline: bool,
    pub head_tagger_input: HeadInput,
    /// Encoder fields left unset take the per-embedding-kind defaults.
    pub cell_kind: Option<CellKind>,
    pub hidden_dim: Option<usize>,
    pub num_layers: usize,
    pub dropout_rate: Option<f64>,
    pub use_post_projection: Option<bool>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub threshold: i64,
    pub na_as_negative: bool,
    pub seed: u64,
    pub weight_span: f64,
    pub weight_head: f64,
    pub weight_srl: f64,
    pub weight_sprl: f64,
    pub sprl_reduction: SprlReduction,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task_mode: TaskMode::Mtl,
            embedding_kind: EmbeddingKind::Static,
            embedding_path: None,
            contextual_model: None,
            train_data: None,
            dev_data: None,
            test_data: None,
            span_source: Source::None,
            head_source: Source::None,
            sprl_heads: HeadChoice::Gold,
            use_span_embedding: false,
            use_sentence_embedding: false,
            transfer: TransferMode::None,
            transfer_checkpoint: None,
            pipeline_checkpoint: None,
            joint_pipeline: false,
            head_tagger_input: HeadInput::Predicted,
            cell_kind: None,
            hidden_dim: None,
            num_layers: 1,
            dropout_rate: None,
            use_post_projection: None,
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            clip_norm: Some(5.0),
            threshold: 2,
            na_as_negative: true,
            seed: 13,
            weight_span: 1.0,
            weight_head: 1.0,
            weight_srl: 1.0,
            weight_sprl: 1.0,
            sprl_reduction: SprlReduction::Sum,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn optional<T>(value: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if value.is_empty() || value == "none" || value == "default" {
        Ok(None)
    } else {
        f(value).map(Some)
    }
}

fn show<T: ToString>(v: &Option<T>, absent: &str) -> String {
    v.as_ref().map_or_else(|| absent.to_owned(), ToString::to_string)
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_owned(), |p| p.display().to_string())
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "task_mode",
        "embedding_kind",
        "embedding_path",
        "contextual_model",
        "train_data",
        "dev_data",
        "test_data",
        "span_source",
        "head_source",
        "sprl_heads",
        "use_span_embedding",
        "use_sentence_embedding",
        "transfer",
        "transfer_checkpoint",
        "pipeline_checkpoint",
        "joint_pipeline",
        "head_tagger_input",
        "cell_kind",
        "hidden_dim",
        "num_layers",
        "dropout_rate",
        "use_post_projection",
        "learning_rate",
        "batch_size",
        "max_epochs",
        "patience",
        "clip_norm",
        "threshold",
        "na_as_negative",
        "seed",
        "weight_span",
        "weight_head",
        "weight_srl",
        "weight_sprl",
        "sprl_reduction",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let path = |v: &str| Ok(PathBuf::from(v));
        match key {
            "task_mode" => self.task_mode = value.parse()?,
            "embedding_kind" => self.embedding_kind = value.parse()?,
            "embedding_path" => self.embedding_path = optional(value, path)?,
            "contextual_model" => self.contextual_model = optional(value, |v| Ok(v.to_owned()))?,
            "train_data" => self.train_data = optional(value, path)?,
            "dev_data" => self.dev_data = optional(value, path)?,
            "test_data" => self.test_data = optional(value, path)?,
            "span_source" => self.span_source = value.parse()?,
            "head_source" => self.head_source = value.parse()?,
            "sprl_heads" => self.sprl_heads = value.parse()?,
            "use_span_embedding" => self.use_span_embedding = parse_bool(key, value)?,
            "use_sentence_embedding" => self.use_sentence_embedding = parse_bool(key, value)?,
            "transfer" => self.transfer = value.parse()?,
            "transfer_checkpoint" => self.transfer_checkpoint = optional(value, path)?,
            "pipeline_checkpoint" => self.pipeline_checkpoint = optional(value, path)?,
            "joint_pipeline" => self.joint_pipeline = parse_bool(key, value)?,
            "head_tagger_input" => {
                self.head_tagger_input = match value {
                    "predicted" => HeadInput::Predicted,
                    "gold" => HeadInput::Gold,
                    _ => return Err(Error::config(format!("invalid value `{value}` for `{key}`"))),
                }
            }
            "cell_kind" => {
                self.cell_kind = optional(value, |v| match v {
                    "lstm_like" | "lstm" => Ok(CellKind::LstmLike),
                    "gru_like" | "gru" => Ok(CellKind::GruLike),
                    "identity" => Ok(CellKind::Identity),
                    _ => Err(Error::config(format!("invalid value `{v}` for `{key}`"))),
                })?
            }
            "hidden_dim" => self.hidden_dim = optional(value, |v| parse(key, v))?,
            "num_layers" => self.num_layers = parse(key, value)?,
            "dropout_rate" => self.dropout_rate = optional(value, |v| parse(key, v))?,
            "use_post_projection" => self.use_post_projection = optional(value, |v| parse_bool(key, v))?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "clip_norm" => self.clip_norm = optional(value, |v| parse(key, v))?,
            "threshold" => self.threshold = parse(key, value)?,
            "na_as_negative" => self.na_as_negative = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "weight_span" => self.weight_span = parse(key, value)?,
            "weight_head" => self.weight_head = parse(key, value)?,
            "weight_srl" => self.weight_srl = parse(key, value)?,
            "weight_sprl" => self.weight_sprl = parse(key, value)?,
            "sprl_reduction" => self.sprl_reduction = value.parse()?,
            _ => return Err(Error::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{}` is not key=value", o.as_ref())))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Parse a flat document: one `key = value` per line, `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    /// Load a config file; relative data and checkpoint paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse_text(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, dir: &Path) {
        for p in [
            &mut self.embedding_path,
            &mut self.train_data,
            &mut self.dev_data,
            &mut self.test_data,
            &mut self.transfer_checkpoint,
            &mut self.pipeline_checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "task_mode" => self.task_mode.to_string(),
            "embedding_kind" => self.embedding_kind.to_string(),
            "embedding_path" => show_path(&self.embedding_path),
            "contextual_model" => show(&self.contextual_model, "none"),
            "train_data" => show_path(&self.train_data),
            "dev_data" => show_path(&self.dev_data),
            "test_data" => show_path(&self.test_data),
            "span_source" => self.span_source.to_string(),
            "head_source" => self.head_source.to_string(),
            "sprl_heads" => self.sprl_heads.to_string(),
            "use_span_embedding" => self.use_span_embedding.to_string(),
            "use_sentence_embedding" => self.use_sentence_embedding.to_string(),
            "transfer" => self.transfer.to_string(),
            "transfer_checkpoint" => show_path(&self.transfer_checkpoint),
            "pipeline_checkpoint" => show_path(&self.pipeline_checkpoint),
            "joint_pipeline" => self.joint_pipeline.to_string(),
            "head_tagger_input" => match self.head_tagger_input {
                HeadInput::Predicted => "predicted".into(),
                HeadInput::Gold => "gold".into(),
            },
            "cell_kind" => match self.cell_kind {
                None => "default".into(),
                Some(CellKind::LstmLike) => "lstm_like".into(),
                Some(CellKind::GruLike) => "gru_like".into(),
                Some(CellKind::Identity) => "identity".into(),
            },
            "hidden_dim" => show(&self.hidden_dim, "default"),
            "num_layers" => self.num_layers.to_string(),
            "dropout_rate" => show(&self.dropout_rate, "default"),
            "use_post_projection" => show(&self.use_post_projection, "default"),
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "clip_norm" => show(&self.clip_norm, "none"),
            "threshold" => self.threshold.to_string(),
            "na_as_negative" => self.na_as_negative.to_string(),
            "seed" => self.seed.to_string(),
            "weight_span" => self.weight_span.to_string(),
            "weight_head" => self.weight_head.to_string(),
            "weight_srl" => self.weight_srl.to_string(),
            "weight_sprl" => self.weight_sprl.to_string(),
            "sprl_reduction" => self.sprl_reduction.to_string(),
            _ => return None,
        })
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        Self::KEYS
            .iter()
            .map(|k| ((*k).to_owned(), self.get(k).expect("listed key")))
            .collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Canonical text form: every key, in declaration order.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn label_policy(&self) -> LabelPolicy {
        LabelPolicy {
            threshold: self.threshold,
            na_as_negative: self.na_as_negative,
        }
    }

    /// Encoder settings for a given input width, filling unset fields per embedding kind.
    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        let base = match (self.cell_kind, self.embedding_kind) {
            (Some(CellKind::LstmLike), _) | (None, EmbeddingKind::Static) => EncoderConfig::lstm_default(input_dim),
            (Some(CellKind::GruLike), _) | (None, EmbeddingKind::Contextual) => EncoderConfig::gru_default(input_dim),
            (Some(CellKind::Identity), _) => EncoderConfig {
                cell_kind: CellKind::Identity,
                dropout_rate: 0.0,
                use_post_projection: false,
                ..EncoderConfig::gru_default(input_dim)
            },
        };
        EncoderConfig {
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            num_layers: self.num_layers,
            dropout_rate: self.dropout_rate.unwrap_or(base.dropout_rate),
            use_post_projection: self.use_post_projection.unwrap_or(base.use_post_projection),
            ..base
        }
    }

    pub fn trains_srl(&self) -> bool {
        matches!(self.task_mode, TaskMode::SrlOnly | TaskMode::Mtl)
    }

    pub fn trains_sprl(&self) -> bool {
        matches!(self.task_mode, TaskMode::SprlOnly | TaskMode::Mtl)
    }

    pub fn trains_span_head(&self) -> bool {
        self.task_mode == TaskMode::SpanHead || self.joint_pipeline
    }

    /// Whether any input comes from span/head predictions.
    pub fn uses_predictions(&self) -> bool {
        (self.trains_srl() && (self.span_source == Source::Predicted || self.head_source == Source::Predicted))
            || (self.trains_sprl() && self.sprl_heads == HeadChoice::Predicted)
    }

    /// Predictions come from a separately trained pipeline model.
    pub fn needs_pipeline(&self) -> bool {
        self.uses_predictions() && !self.joint_pipeline
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("weight_span", self.weight_span),
            ("weight_head", self.weight_head),
            ("weight_srl", self.weight_srl),
            ("weight_sprl", self.weight_sprl),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        if !(1..=4).contains(&self.threshold) {
            return Err(Error::Threshold(self.threshold));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::config("clip_norm must be positive or none"));
        }
        match self.embedding_kind {
            EmbeddingKind::Static if self.embedding_path.is_none() => {
                return Err(Error::config("static embeddings need embedding_path"))
            }
            EmbeddingKind::Contextual if self.contextual_model.is_none() => {
                return Err(Error::config("contextual embeddings need contextual_model"))
            }
            _ => {}
        }
        if self.task_mode == TaskMode::SpanHead
            && (self.span_source != Source::None || self.head_source != Source::None || self.transfer != TransferMode::None)
        {
            return Err(Error::config(
                "span_head training takes no auxiliary sources and no transfer",
            ));
        }
        if self.transfer != TransferMode::None && self.transfer_checkpoint.is_none() {
            return Err(Error::config(format!(
                "transfer = {} needs transfer_checkpoint",
                self.transfer
            )));
        }
        if self.joint_pipeline && self.pipeline_checkpoint.is_some() {
            return Err(Error::config("joint_pipeline and pipeline_checkpoint are mutually exclusive"));
        }
        self.encoder_config(1).validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> ExperimentConfig {
        ExperimentConfig {
            embedding_path: Some("emb.txt".into()),
            ..Default::default()
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = valid();
        cfg.apply_overrides(&["span_source=gold", "clip_norm=none", "hidden_dim=16", "seed=7"])
            .unwrap();
        let back = ExperimentConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(ExperimentConfig::from_map(&cfg.to_map()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_errors() {
        let cfg = ExperimentConfig::parse_text("# c\ntask_mode = srl_only  # trailing\n\nseed=3\n").unwrap();
        assert_eq!((cfg.task_mode, cfg.seed), (TaskMode::SrlOnly, 3));
        let err = ExperimentConfig::parse_text("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ExperimentConfig::parse_text("task_mode = both").is_err());
    }

    #[test]
    fn negative_weight_is_config_error() {
        let mut cfg = valid();
        cfg.weight_sprl = -0.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn transfer_needs_checkpoint() {
        let mut cfg = valid();
        cfg.transfer = TransferMode::SpanWeights;
        assert!(cfg.validate().is_err());
        cfg.transfer_checkpoint = Some("ck.json".into());
        cfg.validate().unwrap();
    }

    #[test]
    fn pipeline_requirement() {
        let mut cfg = valid();
        cfg.task_mode = TaskMode::SrlOnly;
        cfg.span_source = Source::Predicted;
        assert!(cfg.needs_pipeline());
        cfg.joint_pipeline = true;
        assert!(!cfg.needs_pipeline() && cfg.trains_span_head());
        cfg.task_mode = TaskMode::SprlOnly;
        cfg.joint_pipeline = false;
        assert!(!cfg.uses_predictions());
    }

    #[test]
    fn encoder_defaults_follow_embedding_kind() {
        let mut cfg = valid();
        let e = cfg.encoder_config(10);
        assert_eq!((e.cell_kind, e.hidden_dim, e.use_post_projection), (CellKind::LstmLike, 128, true));
        cfg.embedding_kind = EmbeddingKind::Contextual;
        let e = cfg.encoder_config(770);
        assert_eq!((e.cell_kind, e.hidden_dim, e.use_post_projection), (CellKind::GruLike, 8, false));
        assert_eq!(e.dropout_rate, 0.25);
        cfg.cell_kind = Some(CellKind::Identity);
        assert_eq!(cfg.encoder_config(770).output_dim(), 770);
    }
}
