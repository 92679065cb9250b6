//! Corpus data model, the JSON-lines interchange format, and validation.

mod convert;
mod protorole;
mod tags;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::convert::{convert_source, ConversionSummary, SplitSummary};
pub use self::protorole::{
    binarize_rating, LabelPolicy, Property, Rating, PROPERTY_COUNT,
};
pub use self::tags::{
    span_tags_to_spans, spans_to_head_tags, spans_to_srl_tags, srl_tags_to_spans,
    srl_to_nameless_tags, HeadTag, Role, SpanTag, SrlTag,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Contiguous argument span with inclusive `end`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentSpan {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub role: Option<Role>,
    #[serde(default)]
    pub head_index: Option<usize>,
    #[serde(default, rename = "protoroles", skip_serializing_if = "BTreeMap::is_empty")]
    pub protorole_ratings: BTreeMap<Property, Rating>,
    /// Binary labels as written by the converter; informational, training relabels from ratings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<BTreeMap<Property, u8>>,
}

impl ArgumentSpan {
    pub fn new(start: usize, end: usize, role: Option<Role>) -> Self {
        ArgumentSpan {
            start,
            end,
            role,
            head_index: None,
            protorole_ratings: BTreeMap::new(),
            binary: None,
        }
    }

    pub fn with_head(mut self, head: usize) -> Self {
        self.head_index = Some(head);
        self
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn has_protoroles(&self) -> bool {
        !self.protorole_ratings.is_empty()
    }

    /// Per-property binary labels under `policy`; `None` where the property is unannotated.
    pub fn labels(&self, policy: &LabelPolicy) -> Result<[Option<u8>; PROPERTY_COUNT]> {
        let mut out = [None; PROPERTY_COUNT];
        for (&p, &r) in &self.protorole_ratings {
            out[p.index()] = policy.label(r)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateInstance {
    pub sentence_id: String,
    pub predicate_index: usize,
    pub argument_spans: Vec<ArgumentSpan>,
    pub gold_srl_tags: Option<Vec<SrlTag>>,
}

impl PredicateInstance {
    pub fn id(&self) -> String {
        format!("{}#{}", self.sentence_id, self.predicate_index)
    }

    pub fn role_spans(&self) -> Vec<ArgumentSpan> {
        self.argument_spans
            .iter()
            .filter(|s| s.role.is_some())
            .cloned()
            .collect()
    }

    pub fn srl_tags(&self, len: usize) -> Result<Vec<SrlTag>> {
        match &self.gold_srl_tags {
            Some(tags) => Ok(tags.clone()),
            None => spans_to_srl_tags(&self.role_spans(), self.predicate_index, len),
        }
    }

    pub fn span_tags(&self, len: usize) -> Result<Vec<SpanTag>> {
        Ok(srl_to_nameless_tags(&self.srl_tags(len)?))
    }

    /// Head tags of the role-labelled spans, aligned with [`Self::span_tags`].
    pub fn head_tags(&self, len: usize) -> Vec<HeadTag> {
        spans_to_head_tags(&self.role_spans(), len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub sentences: Vec<Sentence>,
    pub instances: Vec<PredicateInstance>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(split: Split, sentences: Vec<Sentence>, instances: Vec<PredicateInstance>) -> Result<Self> {
        let mut index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::Validation {
                    instance: s.id.clone(),
                    message: "duplicate sentence id".into(),
                });
            }
        }
        let corpus = Corpus {
            split,
            sentences,
            instances,
            index,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.index.get(id).map(|&i| &self.sentences[i])
    }

    pub fn sentence_of(&self, instance: &PredicateInstance) -> &Sentence {
        self.sentence(&instance.sentence_id)
            .expect("validated corpus references existing sentences")
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.sentences {
            validate_sentence(s)?;
        }
        for inst in &self.instances {
            let sentence = self.sentence(&inst.sentence_id).ok_or_else(|| Error::Validation {
                instance: inst.id(),
                message: format!("unknown sentence {:?}", inst.sentence_id),
            })?;
            validate_instance(inst, sentence)?;
        }
        Ok(())
    }

    /// Distinct sentences referenced by at least one instance.
    pub fn sentence_count(&self) -> usize {
        let mut seen: Vec<&str> = self.instances.iter().map(|i| i.sentence_id.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

fn invalid(inst: &PredicateInstance, message: impl Into<String>) -> Error {
    Error::Validation {
        instance: inst.id(),
        message: message.into(),
    }
}

fn validate_sentence(s: &Sentence) -> Result<()> {
    if s.tokens.is_empty() {
        return Err(Error::Validation {
            instance: s.id.clone(),
            message: "sentence has no tokens".into(),
        });
    }
    if let Some(i) = s.tokens.iter().position(|t| t.is_empty()) {
        return Err(Error::Validation {
            instance: s.id.clone(),
            message: format!("token {i} is empty"),
        });
    }
    Ok(())
}

pub fn validate_instance(inst: &PredicateInstance, sentence: &Sentence) -> Result<()> {
    let len = sentence.len();
    if inst.predicate_index >= len {
        return Err(invalid(
            inst,
            format!("predicate index {} >= sentence length {len}", inst.predicate_index),
        ));
    }
    for span in &inst.argument_spans {
        if span.start > span.end {
            return Err(invalid(inst, format!("span [{},{}]: start > end", span.start, span.end)));
        }
        if span.end >= len {
            return Err(invalid(
                inst,
                format!("span [{},{}]: end >= sentence length {len}", span.start, span.end),
            ));
        }
        if span.contains(inst.predicate_index) {
            return Err(invalid(
                inst,
                format!("span [{},{}] contains the predicate", span.start, span.end),
            ));
        }
        if let Some(h) = span.head_index {
            if !span.contains(h) {
                return Err(invalid(
                    inst,
                    format!("span [{},{}]: head {h} outside span", span.start, span.end),
                ));
            }
        }
        for r in span.protorole_ratings.values() {
            r.validate().map_err(|e| invalid(inst, e.to_string()))?;
        }
    }
    let mut sorted: Vec<&ArgumentSpan> = inst.argument_spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end {
            return Err(invalid(
                inst,
                format!(
                    "spans [{},{}] and [{},{}] overlap",
                    w[0].start, w[0].end, w[1].start, w[1].end
                ),
            ));
        }
    }
    if !inst.argument_spans.iter().any(|s| s.role.is_some()) {
        return Err(invalid(inst, "instance has no SRL annotation"));
    }
    if let Some(tags) = &inst.gold_srl_tags {
        if tags.len() != len {
            return Err(invalid(inst, "srl_tags length differs from sentence length"));
        }
        let derived = spans_to_srl_tags(&inst.role_spans(), inst.predicate_index, len)
            .map_err(|e| invalid(inst, e.to_string()))?;
        if &derived != tags {
            return Err(invalid(inst, "srl_tags disagree with argument spans"));
        }
    }
    Ok(())
}

/// One line of the JSON-lines corpus format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub sentence_id: String,
    pub tokens: Vec<String>,
    pub predicate_index: usize,
    pub spans: Vec<ArgumentSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srl_tags: Option<Vec<SrlTag>>,
}

fn corpus_from_records(split: Split, records: Vec<(usize, Record)>, path: &Path) -> Result<Corpus> {
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut instances = Vec::with_capacity(records.len());
    for (line, rec) in records {
        match seen.get(&rec.sentence_id) {
            Some(&i) if sentences[i].tokens != rec.tokens => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("tokens of sentence {:?} differ from an earlier record", rec.sentence_id),
                });
            }
            Some(_) => {}
            None => {
                seen.insert(rec.sentence_id.clone(), sentences.len());
                sentences.push(Sentence {
                    id: rec.sentence_id.clone(),
                    tokens: rec.tokens,
                });
            }
        }
        instances.push(PredicateInstance {
            sentence_id: rec.sentence_id,
            predicate_index: rec.predicate_index,
            argument_spans: rec.spans,
            gold_srl_tags: rec.srl_tags,
        });
    }
    Corpus::new(split, sentences, instances)
}

pub fn parse_corpus(text: &str, split: Split, path: &Path) -> Result<Corpus> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    corpus_from_records(split, records, path)
}

pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    corpus_from_records(split, records, path)
}

pub fn corpus_records(corpus: &Corpus) -> Vec<Record> {
    corpus
        .instances
        .iter()
        .map(|inst| Record {
            sentence_id: inst.sentence_id.clone(),
            tokens: corpus.sentence_of(inst).tokens.clone(),
            predicate_index: inst.predicate_index,
            spans: inst.argument_spans.clone(),
            srl_tags: inst.gold_srl_tags.clone(),
        })
        .collect()
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in corpus_records(corpus) {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAT: &str = r#"{"sentence_id": "s1", "tokens": ["The", "cat", "ate", "the", "rat"], "predicate_index": 2, "spans": [{"start": 3, "end": 4, "role": "A1", "head_index": 4, "protoroles": {"awareness": 1, "sentient": {"na": true}}}]}"#;

    fn parse(text: &str) -> Result<Corpus> {
        parse_corpus(text, Split::Train, Path::new("mem.jsonl"))
    }

    #[test]
    fn loads_minimal_record() {
        let c = parse(CAT).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.instances[0].argument_spans.len(), 1);
        let span = &c.instances[0].argument_spans[0];
        assert_eq!(span.role, Some(Role::A1));
        assert_eq!(span.protorole_ratings[&Property::Sentient], Rating::NotApplicable);
    }

    #[test]
    fn inverted_span_is_rejected() {
        let text = CAT.replace(r#""start": 3, "end": 4"#, r#""start": 4, "end": 2"#);
        let err = parse(&text).unwrap_err();
        match err {
            Error::Validation { instance, message } => {
                assert_eq!(instance, "s1#2");
                assert!(message.contains("start > end"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = format!("{CAT}\n{{not json\n");
        match parse(&text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn head_outside_span_is_rejected() {
        let text = CAT.replace(r#""head_index": 4"#, r#""head_index": 1"#);
        assert!(matches!(parse(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn span_over_predicate_is_rejected() {
        let text = CAT.replace(r#""start": 3"#, r#""start": 2"#);
        assert!(matches!(parse(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn instance_without_roles_is_rejected() {
        let text = CAT.replace(r#""role": "A1", "#, "");
        assert!(matches!(parse(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn rating_out_of_range_is_rejected() {
        let text = CAT.replace(r#""awareness": 1"#, r#""awareness": 7"#);
        assert!(matches!(parse(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn unknown_property_is_a_parse_error() {
        let text = CAT.replace("awareness", "cheerfulness");
        assert!(matches!(parse(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn inconsistent_srl_tags_rejected() {
        let text = CAT.replace(
            r#""predicate_index": 2,"#,
            r#""predicate_index": 2, "srl_tags": ["O","O","B-V","B-A0","I-A0"],"#,
        );
        assert!(matches!(parse(&text), Err(Error::Validation { .. })));
        let ok = CAT.replace(
            r#""predicate_index": 2,"#,
            r#""predicate_index": 2, "srl_tags": ["O","O","B-V","B-A1","I-A1"],"#,
        );
        parse(&ok).unwrap();
    }

    #[test]
    fn write_then_load_is_identity() {
        let c = parse(CAT).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&c, &path).unwrap();
        let back = load_corpus(&path, Split::Train).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn labels_follow_policy() {
        let c = parse(CAT).unwrap();
        let labels = c.instances[0].argument_spans[0].labels(&LabelPolicy::default()).unwrap();
        assert_eq!(labels[Property::Awareness.index()], Some(0));
        assert_eq!(labels[Property::Sentient.index()], Some(0));
        assert_eq!(labels[Property::Volition.index()], None);
    }
}
