//! Prediction dumps (one JSON object per instance) and everything recomputed from them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{span_tags_to_spans, HeadTag, Property, SpanTag, SrlTag, PROPERTY_COUNT};
use crate::error::{Error, Result};
use crate::evaluation::{ConfusionCounts, MetricsReport};
use crate::model::ModelParams;
use crate::parallel::{map_items, Backend};
use crate::sprl::PropertyPrediction;
use crate::taggers::{head_consistency_report, HeadConsistencyReport};
use crate::training::{Prepared, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SprlRecord {
    pub span: (usize, usize),
    pub head_index: usize,
    /// Gold binary labels of the annotated properties.
    pub gold: BTreeMap<Property, u8>,
    pub predicted: BTreeMap<Property, PropertyPrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub sentence_id: String,
    pub predicate_index: usize,
    pub tokens: Vec<String>,
    /// Tasks the producing model was trained on; other predictions are not meaningful.
    pub tasks: Vec<String>,
    /// `model` when span/head predictions come from this model, `pipeline` otherwise.
    pub span_head_source: String,
    pub gold_srl_tags: Vec<SrlTag>,
    pub predicted_srl_tags: Vec<SrlTag>,
    pub gold_span_tags: Vec<SpanTag>,
    pub predicted_span_tags: Vec<SpanTag>,
    pub gold_head_tags: Vec<HeadTag>,
    /// Head tags with predicted span tags as the head tagger's input.
    pub predicted_head_tags: Vec<HeadTag>,
    /// Head tags with gold span tags as the head tagger's input.
    pub predicted_head_tags_gold_spans: Vec<HeadTag>,
    pub sprl: Vec<SprlRecord>,
}

impl PredictionRecord {
    pub fn has_task(&self, task: &str) -> bool {
        self.tasks.iter().any(|t| t == task)
    }
}

/// Eval-mode predictions for every prepared example.
pub fn predict_records(
    params: &ModelParams,
    data: &Prepared,
    tasks: &[Task],
    backend: Backend,
) -> Result<Vec<PredictionRecord>> {
    let task_names: Vec<String> = tasks.iter().map(|t| t.name().to_owned()).collect();
    let out = map_items(backend, &data.examples, |i, ex| -> Result<PredictionRecord> {
        let p = params.predict(ex)?;
        let (source, span_tags, head_tags, head_gold) = match &data.pipeline[i] {
            Some(pipe) => (
                "pipeline",
                pipe.span_tags.clone(),
                pipe.head_tags.clone(),
                pipe.head_tags_gold_spans.clone(),
            ),
            None => ("model", p.span_tags, p.head_tags, p.head_tags_gold_spans),
        };
        let sprl = p
            .pairs
            .iter()
            .map(|pair| {
                let mut gold = BTreeMap::new();
                let mut predicted = BTreeMap::new();
                for (k, prop) in Property::ALL.iter().enumerate() {
                    if let Some(l) = pair.labels[k] {
                        gold.insert(*prop, l);
                    }
                    predicted.insert(*prop, pair.predictions[k]);
                }
                SprlRecord {
                    span: pair.span,
                    head_index: pair.head_index,
                    gold,
                    predicted,
                }
            })
            .collect();
        Ok(PredictionRecord {
            id: ex.id.clone(),
            sentence_id: ex.sentence_id.clone(),
            predicate_index: ex.predicate_index,
            tokens: data.tokens[i].clone(),
            tasks: task_names.clone(),
            span_head_source: source.to_owned(),
            gold_srl_tags: ex.gold_srl_tags.clone(),
            predicted_srl_tags: p.srl_tags,
            gold_span_tags: ex.gold_span_tags.clone(),
            predicted_span_tags: span_tags,
            gold_head_tags: ex.gold_head_tags.clone(),
            predicted_head_tags: head_tags,
            predicted_head_tags_gold_spans: head_gold,
            sprl,
        })
    });
    out.into_iter().collect()
}

pub fn write_records(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Metric families recomputable from dumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportKind {
    Srl,
    Span,
    /// Head tags given gold span input.
    HeadGoldSpans,
    /// Head tags given predicted span input.
    HeadPredictedSpans,
    Sprl,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] = [
        ReportKind::Srl,
        ReportKind::Span,
        ReportKind::HeadGoldSpans,
        ReportKind::HeadPredictedSpans,
        ReportKind::Sprl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Srl => "srl",
            ReportKind::Span => "span",
            ReportKind::HeadGoldSpans => "head_gold_spans",
            ReportKind::HeadPredictedSpans => "head_predicted_spans",
            ReportKind::Sprl => "sprl",
        }
    }

    /// The task whose predictions this report scores.
    pub fn task(self) -> &'static str {
        match self {
            ReportKind::Srl => "srl",
            ReportKind::Span => "span",
            ReportKind::HeadGoldSpans | ReportKind::HeadPredictedSpans => "head",
            ReportKind::Sprl => "sprl",
        }
    }

    /// Whether the dumps carry meaningful predictions for this report.
    pub fn available(self, records: &[PredictionRecord]) -> bool {
        !records.is_empty()
            && records.iter().all(|r| match self {
                ReportKind::Srl | ReportKind::Sprl => r.has_task(self.task()),
                _ => r.span_head_source == "pipeline" || r.has_task(self.task()),
            })
    }
}

fn tags_report<T: Copy>(
    experiment: &str,
    kind: ReportKind,
    labels: Vec<String>,
    records: &[PredictionRecord],
    index: impl Fn(T) -> usize,
    pick: impl Fn(&PredictionRecord) -> (&[T], &[T]),
) -> Result<MetricsReport> {
    let mut c = ConfusionCounts::new(labels.clone());
    for r in records {
        let (gold, pred) = pick(r);
        let g: Vec<usize> = gold.iter().map(|&t| index(t)).collect();
        let p: Vec<usize> = pred.iter().map(|&t| index(t)).collect();
        c.merge(&ConfusionCounts::from_sequences(&labels, &g, &p).map_err(|e| {
            Error::Metric(format!("instance {}: {e}", r.id))
        })?)?;
    }
    MetricsReport::from_counts(experiment, kind.name(), &c)
}

/// Per-token (SRL/span/head) or per-argument-property (SPRL) metrics from dumps.
pub fn report_from_records(experiment: &str, kind: ReportKind, records: &[PredictionRecord]) -> Result<MetricsReport> {
    if !kind.available(records) {
        return Err(Error::Metric(format!(
            "dumps carry no {} predictions",
            kind.task()
        )));
    }
    let heads = || HeadTag::ALL.iter().map(|t| t.name().to_owned()).collect::<Vec<_>>();
    match kind {
        ReportKind::Srl => tags_report(
            experiment,
            kind,
            SrlTag::ALL.iter().map(|t| t.name()).collect(),
            records,
            SrlTag::index,
            |r| (&r.gold_srl_tags, &r.predicted_srl_tags),
        ),
        ReportKind::Span => tags_report(
            experiment,
            kind,
            SpanTag::ALL.iter().map(|t| t.name().to_owned()).collect(),
            records,
            SpanTag::index,
            |r| (&r.gold_span_tags, &r.predicted_span_tags),
        ),
        ReportKind::HeadGoldSpans => tags_report(experiment, kind, heads(), records, HeadTag::index, |r| {
            (&r.gold_head_tags, &r.predicted_head_tags_gold_spans)
        }),
        ReportKind::HeadPredictedSpans => tags_report(experiment, kind, heads(), records, HeadTag::index, |r| {
            (&r.gold_head_tags, &r.predicted_head_tags)
        }),
        ReportKind::Sprl => {
            let mut c = ConfusionCounts::new(Property::ALL.iter().map(|p| p.name()));
            for r in records {
                for pair in &r.sprl {
                    for (prop, &gold) in &pair.gold {
                        let pred = pair.predicted.get(prop).ok_or_else(|| {
                            Error::Metric(format!("instance {}: no prediction for {}", r.id, prop.name()))
                        })?;
                        c.add_binary(prop.index(), gold == 1, pred.label == 1);
                    }
                }
            }
            debug_assert_eq!(c.labels.len(), PROPERTY_COUNT);
            MetricsReport::from_counts(experiment, kind.name(), &c)
        }
    }
}

/// Head diagnostics of the predicted head tags against the gold argument spans.
pub fn head_diagnostics(records: &[PredictionRecord]) -> HeadConsistencyReport {
    let mut total = HeadConsistencyReport::default();
    for r in records {
        let spans = span_tags_to_spans(&r.gold_span_tags);
        total.merge(&head_consistency_report(&r.predicted_head_tags, &spans));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;
    use HeadTag::{Head as H, Other as O};

    fn record(gold_spans: Vec<SpanTag>, heads: Vec<HeadTag>) -> PredictionRecord {
        let n = gold_spans.len();
        PredictionRecord {
            id: "s#0".into(),
            sentence_id: "s".into(),
            predicate_index: 0,
            tokens: vec!["w".into(); n],
            tasks: vec!["srl".into(), "sprl".into()],
            span_head_source: "pipeline".into(),
            gold_srl_tags: vec![SrlTag::Outside; n],
            predicted_srl_tags: vec![SrlTag::Outside; n],
            gold_span_tags: gold_spans.clone(),
            predicted_span_tags: gold_spans,
            gold_head_tags: heads.clone(),
            predicted_head_tags: heads.clone(),
            predicted_head_tags_gold_spans: heads,
            sprl: Vec::new(),
        }
    }

    #[test]
    fn diagnostics_sum_over_records() {
        use SpanTag::{Begin as B, Inside as I, Outside as X, Verb as V};
        let recs = [
            record(vec![V, B, I, X, B], vec![O, O, O, H, O]),
            record(vec![B, I, V, B, I], vec![H, H, O, O, H]),
        ];
        let d = head_diagnostics(&recs);
        assert_eq!(d.predicted_heads, 4);
        assert_eq!(d.heads_outside_spans, 1);
        assert_eq!(d.spans, 4);
        assert_eq!(d.spans_without_head, 2);
        assert_eq!(d.spans_with_multiple_heads, 1);
    }

    #[test]
    fn srl_report_and_availability() {
        let mut r = record(vec![SpanTag::Verb, SpanTag::Begin], vec![O, H]);
        r.gold_srl_tags = vec![SrlTag::Verb, SrlTag::Begin(Role::A1)];
        r.predicted_srl_tags = vec![SrlTag::Verb, SrlTag::Outside];
        let rep = report_from_records("e", ReportKind::Srl, &[r.clone()]).unwrap();
        assert_eq!(rep.labels.len(), 14);
        assert_eq!(rep.micro_f1, 0.5);
        r.tasks = vec!["sprl".into()];
        assert!(report_from_records("e", ReportKind::Srl, &[r]).is_err());
    }

    #[test]
    fn sprl_counts_only_annotated_properties() {
        let mut r = record(vec![SpanTag::Verb, SpanTag::Begin], vec![O, H]);
        let mut gold = BTreeMap::new();
        gold.insert(Property::Volition, 1);
        gold.insert(Property::Sentient, 0);
        let predicted = Property::ALL
            .iter()
            .map(|p| (*p, PropertyPrediction { probability: 0.9, label: 1 }))
            .collect();
        r.sprl.push(SprlRecord {
            span: (1, 1),
            head_index: 1,
            gold,
            predicted,
        });
        let rep = report_from_records("e", ReportKind::Sprl, &[r]).unwrap();
        let vol = rep.label("volition").unwrap();
        assert_eq!((vol.f1, vol.support), (1.0, 1));
        let sent = rep.label("sentient").unwrap();
        assert_eq!((sent.precision, sent.support), (0.0, 0));
        assert!((rep.micro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }
}
