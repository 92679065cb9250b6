//! Versioned JSON checkpoints holding config, architecture and named tensors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{ModelParams, ModelSpec, ENCODER_PREFIX, HEAD_PREFIX, SPAN_PREFIX};

use super::config::{ExperimentConfig, TransferMode};

pub const CHECKPOINT_FORMAT: &str = "protosrl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: BTreeMap<String, String>,
    pub spec: ModelSpec,
    pub seed: u64,
    pub epoch: usize,
    pub tensors: BTreeMap<String, Matrix>,
}

impl Checkpoint {
    pub fn new(cfg: &ExperimentConfig, params: &ModelParams, epoch: usize) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            config: cfg.to_map(),
            spec: params.spec.clone(),
            seed: cfg.seed,
            epoch,
            tensors: params.tensors().into_iter().map(|(n, m)| (n, m.clone())).collect(),
        }
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_map(&self.config)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let mut params = ModelParams::init(&self.spec, 0)?;
        let mut seen = 0;
        for (name, m) in params.tensors_mut() {
            let src = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.shape() != m.shape() || src.data.len() != m.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, architecture expects {:?}",
                    src.shape(),
                    m.shape()
                )));
            }
            m.data.copy_from_slice(&src.data);
            seen += 1;
        }
        if seen != self.tensors.len() {
            return Err(Error::Checkpoint("checkpoint holds tensors unknown to its architecture".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("{}: not a checkpoint", path.display())));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint version {}",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }
}

/// Copy the shared encoder and the selected tagger weights from `source` into `target`.
/// Everything else in `target` keeps its fresh initialization.
pub fn transfer_init(target: &mut ModelParams, source: &ModelParams, mode: TransferMode) -> Result<()> {
    let prefixes: &[&str] = match mode {
        TransferMode::None => return Ok(()),
        TransferMode::SpanWeights => &[ENCODER_PREFIX, SPAN_PREFIX],
        TransferMode::SpanAndHeadWeights => &[ENCODER_PREFIX, SPAN_PREFIX, HEAD_PREFIX],
    };
    let wanted = |name: &str| prefixes.iter().any(|p| name.starts_with(&format!("{p}.")));
    let src: BTreeMap<String, &Matrix> = source.tensors().into_iter().collect();
    let tgt_names: Vec<String> = target.tensors().into_iter().map(|(n, _)| n).collect();
    for name in src.keys().filter(|n| wanted(n)) {
        if !tgt_names.contains(name) {
            return Err(Error::Transfer {
                tensor: name.clone(),
                message: "absent from the target model".into(),
            });
        }
    }
    for (name, m) in target.tensors_mut() {
        if !wanted(&name) {
            continue;
        }
        let s = src.get(&name).ok_or_else(|| Error::Transfer {
            tensor: name.clone(),
            message: "absent from the source checkpoint".into(),
        })?;
        if s.shape() != m.shape() {
            return Err(Error::Transfer {
                tensor: name.clone(),
                message: format!("source shape {:?}, target shape {:?}", s.shape(), m.shape()),
            });
        }
        m.data.copy_from_slice(&s.data);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{CellKind, EncoderConfig};
    use crate::sprl::PairLayout;

    fn spec(hidden: usize, span_emb: Option<usize>) -> ModelSpec {
        let encoder = EncoderConfig {
            cell_kind: CellKind::LstmLike,
            input_dim: 4,
            hidden_dim: hidden,
            num_layers: 1,
            dropout_rate: 0.1,
            use_post_projection: true,
        };
        ModelSpec {
            pair_layout: PairLayout {
                encoded: 2 * hidden,
                span_embedding: span_emb,
                sentence_embedding: None,
            },
            srl_inputs: Default::default(),
            encoder,
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let params = ModelParams::init(&spec(3, None), 11).unwrap();
        let ck = Checkpoint::new(&ExperimentConfig::default(), &params, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params().unwrap(), params);
        assert_eq!(back.experiment_config().unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn transfer_modes() {
        let source = ModelParams::init(&spec(3, None), 1).unwrap();
        let fresh = ModelParams::init(&spec(3, Some(2)), 2).unwrap();

        let mut t = fresh.clone();
        transfer_init(&mut t, &source, TransferMode::SpanWeights).unwrap();
        assert_eq!(t.encoder, source.encoder);
        assert_eq!(t.span, source.span);
        assert_eq!(t.head, fresh.head);
        assert_eq!((&t.srl, &t.sprl), (&fresh.srl, &fresh.sprl));

        let mut t = fresh.clone();
        transfer_init(&mut t, &source, TransferMode::SpanAndHeadWeights).unwrap();
        assert_eq!(t.head, source.head);
        assert_eq!(t.sprl, fresh.sprl);
    }

    #[test]
    fn transfer_shape_mismatch_names_tensor() {
        let source = ModelParams::init(&spec(3, None), 1).unwrap();
        let mut target = ModelParams::init(&spec(4, None), 2).unwrap();
        match transfer_init(&mut target, &source, TransferMode::SpanWeights) {
            Err(Error::Transfer { tensor, .. }) => assert!(tensor.starts_with("encoder."), "{tensor}"),
            other => panic!("expected transfer error, got {other:?}"),
        }
    }
}
