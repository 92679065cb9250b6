//! Turning corpora into model examples under an experiment config.

use std::collections::HashMap;
use std::sync::Arc;

use crate::corpus::{span_tags_to_spans, Corpus, HeadTag, PredicateInstance, Sentence, SpanTag, PROPERTY_COUNT};
use crate::error::{Error, Result};
use crate::features::{
    resolve_contextual, span_embedding, token_features, ContextualOutput, EmbeddingProvider, StaticEmbeddings,
    Stopwords,
};
use crate::model::{Aux, Example, ModelParams, ModelSpec, PairExample, PairHead};
use crate::parallel::{map_items, Backend};
use crate::sprl::PairLayout;
use crate::taggers::{match_predicted_span, select_argument_heads, SrlInputs};

use super::config::{EmbeddingKind, ExperimentConfig, HeadChoice, Source};
use super::loss::TaskCounts;

/// Embedding backend plus stopword list, shared read-only across runs.
pub struct Resources {
    pub provider: EmbeddingProvider,
    pub stopwords: Stopwords,
}

impl Resources {
    pub fn load(cfg: &ExperimentConfig) -> Result<Arc<Self>> {
        let provider = match cfg.embedding_kind {
            EmbeddingKind::Static => {
                let path = cfg
                    .embedding_path
                    .as_ref()
                    .ok_or_else(|| Error::config("static embeddings need embedding_path"))?;
                EmbeddingProvider::Static(StaticEmbeddings::load(path)?)
            }
            EmbeddingKind::Contextual => {
                let id = cfg
                    .contextual_model
                    .as_deref()
                    .ok_or_else(|| Error::config("contextual embeddings need contextual_model"))?;
                EmbeddingProvider::Contextual(resolve_contextual(id)?)
            }
        };
        Ok(Arc::new(Resources {
            provider,
            stopwords: Stopwords::english(),
        }))
    }

    /// Model architecture implied by a config on these resources.
    pub fn model_spec(&self, cfg: &ExperimentConfig) -> ModelSpec {
        let d = self.provider.dimension();
        let encoder = cfg.encoder_config(d + 2);
        ModelSpec {
            pair_layout: PairLayout {
                encoded: encoder.output_dim(),
                span_embedding: cfg.use_span_embedding.then_some(d),
                sentence_embedding: cfg.use_sentence_embedding.then(|| self.provider.sentence_dimension()),
            },
            srl_inputs: SrlInputs {
                span_features: cfg.trains_srl() && cfg.span_source != Source::None,
                head_features: cfg.trains_srl() && cfg.head_source != Source::None,
            },
            encoder,
        }
    }

    fn encode_sentences(&self, corpus: &Corpus, backend: Backend) -> Result<HashMap<String, ContextualOutput>> {
        let backend = if self.provider.supports_concurrent_calls() {
            backend
        } else {
            Backend::Sequential
        };
        let outputs = map_items(backend, &corpus.sentences, |_, s: &Sentence| self.provider.encode(s));
        corpus
            .sentences
            .iter()
            .zip(outputs)
            .map(|(s, o)| Ok((s.id.clone(), o?)))
            .collect()
    }
}

/// Span and head predictions of a separately trained pipeline model.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub span_tags: Vec<SpanTag>,
    pub head_tags: Vec<HeadTag>,
    pub head_tags_gold_spans: Vec<HeadTag>,
    pub head_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub examples: Vec<Example>,
    pub pipeline: Vec<Option<PipelineOutput>>,
    pub tokens: Vec<Vec<String>>,
}

impl Prepared {
    pub fn counts(&self) -> TaskCounts {
        counts_of(&self.examples)
    }
}

pub fn counts_of<'a>(examples: impl IntoIterator<Item = &'a Example>) -> TaskCounts {
    let mut c = TaskCounts::default();
    for ex in examples {
        c.tokens += ex.len();
        for p in &ex.pairs {
            for (k, l) in p.labels.iter().enumerate() {
                c.sprl[k] += usize::from(l.is_some());
            }
        }
    }
    c
}

fn missing_head(inst: &PredicateInstance, start: usize, end: usize) -> Error {
    Error::Data(format!(
        "instance {}: span [{start}, {end}] has no gold head",
        inst.id()
    ))
}

/// Build examples for every instance. `pipeline` supplies predicted spans/heads when the config
/// reads them from a separate model.
pub fn prepare(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    res: &Resources,
    pipeline: Option<&ModelParams>,
    backend: Backend,
) -> Result<Prepared> {
    if cfg.needs_pipeline() && pipeline.is_none() {
        return Err(Error::config(
            "predicted spans/heads need a trained span/head pipeline (pipeline_checkpoint) or joint_pipeline",
        ));
    }
    let pipeline = if cfg.uses_predictions() && !cfg.joint_pipeline { pipeline } else { None };
    if let Some(p) = pipeline {
        if p.encoder.config.input_dim != res.provider.dimension() + 2 {
            return Err(Error::config("pipeline model was trained on different embeddings"));
        }
    }
    let encoded = res.encode_sentences(corpus, backend)?;
    let policy = cfg.label_policy();
    let needs_gold_heads = cfg.trains_span_head() || (cfg.trains_srl() && cfg.head_source == Source::Gold);
    let pred_spans_for_heads = cfg.span_source == Source::Predicted;

    let built = map_items(backend, &corpus.instances, |_, inst: &PredicateInstance| -> Result<_> {
        let sentence = corpus.sentence_of(inst);
        let len = sentence.len();
        let out = &encoded[&sentence.id];
        let features = token_features(&out.tokens, inst.predicate_index);
        let gold_srl_tags = inst.srl_tags(len)?;
        let gold_span_tags = inst.span_tags(len)?;
        let gold_head_tags = inst.head_tags(len);
        if needs_gold_heads {
            if let Some(s) = inst.role_spans().iter().find(|s| s.head_index.is_none()) {
                return Err(missing_head(inst, s.start, s.end));
            }
        }
        let mut ex = Example {
            id: inst.id(),
            sentence_id: inst.sentence_id.clone(),
            features,
            predicate_index: inst.predicate_index,
            gold_span_tags,
            gold_head_tags,
            gold_srl_tags,
            gold_spans: inst.argument_spans.iter().map(|s| (s.start, s.end)).collect(),
            aux_spans: None,
            aux_heads: None,
            pairs: Vec::new(),
            sentence_embedding: cfg.use_sentence_embedding.then(|| out.summary.clone()),
        };
        let piped = match pipeline {
            Some(p) => {
                let pred = p.predict(&ex)?;
                Some(PipelineOutput {
                    span_tags: pred.span_tags,
                    head_tags: pred.head_tags,
                    head_tags_gold_spans: pred.head_tags_gold_spans,
                    head_scores: pred.head_probs.iter().map(|d| d[HeadTag::Head.index()]).collect(),
                })
            }
            None => None,
        };
        if cfg.trains_srl() {
            ex.aux_spans = match cfg.span_source {
                Source::None => None,
                Source::Gold => Some(Aux::Fixed(ex.gold_span_tags.clone())),
                Source::Predicted => Some(piped.as_ref().map_or(Aux::Own, |p| Aux::Fixed(p.span_tags.clone()))),
            };
            ex.aux_heads = match cfg.head_source {
                Source::None => None,
                Source::Gold => Some(Aux::Fixed(ex.gold_head_tags.clone())),
                Source::Predicted => Some(piped.as_ref().map_or(Aux::Own, |p| Aux::Fixed(p.head_tags.clone()))),
            };
        }
        if cfg.trains_sprl() {
            for (span_id, span) in inst.argument_spans.iter().enumerate() {
                if !span.has_protoroles() {
                    continue;
                }
                let labels: [Option<u8>; PROPERTY_COUNT] = span.labels(&policy)?;
                let head = match (cfg.sprl_heads, &piped) {
                    (HeadChoice::Gold, _) => {
                        PairHead::Fixed(span.head_index.ok_or_else(|| missing_head(inst, span.start, span.end))?)
                    }
                    (HeadChoice::Predicted, Some(p)) => {
                        let within = if pred_spans_for_heads {
                            match_predicted_span((span.start, span.end), &span_tags_to_spans(&p.span_tags))
                        } else {
                            (span.start, span.end)
                        };
                        PairHead::Fixed(select_argument_heads(&p.head_scores, &[within])[0])
                    }
                    (HeadChoice::Predicted, None) => PairHead::Own {
                        predicted_spans: pred_spans_for_heads,
                    },
                };
                ex.pairs.push(PairExample {
                    span_id,
                    gold_span: (span.start, span.end),
                    head,
                    labels,
                    span_embedding: cfg
                        .use_span_embedding
                        .then(|| span_embedding(sentence, span, &out.tokens, &res.stopwords)),
                });
            }
        }
        Ok((ex, piped, sentence.tokens.clone()))
    });

    let mut prepared = Prepared {
        examples: Vec::with_capacity(built.len()),
        pipeline: Vec::with_capacity(built.len()),
        tokens: Vec::with_capacity(built.len()),
    };
    for b in built {
        let (ex, piped, tokens) = b?;
        prepared.examples.push(ex);
        prepared.pipeline.push(piped);
        prepared.tokens.push(tokens);
    }
    Ok(prepared)
}
