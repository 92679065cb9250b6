//! One-way conversion from the tab-separated source distribution to JSON-lines corpora.
//!
//! The source directory holds three files:
//!
//! * `sentences.tsv`: `sentence_id<TAB>space separated tokens`
//! * `propbank.tsv`: `sentence_id<TAB>predicate_index<TAB>start<TAB>end<TAB>role<TAB>head_index`
//!   with `role` in `A0..A5` or `ARG0..ARG5` (other roles are skipped) and `head_index` either
//!   a token index or `-`.
//! * `spr1.tsv`: header row followed by one judgment per line. Required columns are `Split`,
//!   `Sentence.ID`, `Pred.Token`, `Arg.Tokens.Begin`, `Arg.Tokens.End`, `Property`,
//!   `Applicable` and `Response`; `Arg.Head` is used when present.
//!
//! Sentences without any PropBank annotation are dropped whole. Repeated judgments of the
//! same argument and property are averaged over applicable responses and rounded half up.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    write_corpus, ArgumentSpan, Corpus, LabelPolicy, PredicateInstance, Property, Rating, Role,
    Sentence, Split,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub sentences: usize,
    pub instances: usize,
    pub arguments: usize,
    pub dropped_sentences: usize,
    pub dropped_instances: usize,
    pub dropped_arguments: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConversionSummary {
    pub threshold: i64,
    pub train: SplitSummary,
    pub dev: SplitSummary,
    pub test: SplitSummary,
}

impl ConversionSummary {
    pub fn split(&self, split: Split) -> &SplitSummary {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut SplitSummary {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }
}

struct PbArg {
    start: usize,
    end: usize,
    role: Role,
    head: Option<usize>,
}

#[derive(Default)]
struct SprArg {
    head: Option<usize>,
    responses: BTreeMap<Property, Vec<Option<i64>>>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_index(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("expected a token index, found {field:?}")))
}

fn normalize_property(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '.' || c == '-' { '_' } else { c })
        .collect()
}

fn aggregate(responses: &[Option<i64>]) -> Rating {
    let scores: Vec<i64> = responses.iter().flatten().copied().collect();
    if scores.is_empty() {
        return Rating::NotApplicable;
    }
    // round half up on the mean, in integer arithmetic
    let n = scores.len() as i64;
    let sum: i64 = scores.iter().sum();
    Rating::Score((2 * sum + n) / (2 * n))
}

/// Convert a source directory into `{train,dev,test}.jsonl` under `output`.
pub fn convert_source(input: &Path, output: &Path, threshold: i64) -> Result<ConversionSummary> {
    let policy = LabelPolicy {
        threshold,
        na_as_negative: true,
    };
    super::binarize_rating(Rating::Score(1), threshold)?;

    let sentences_path = input.join("sentences.tsv");
    let mut sentences: HashMap<String, Vec<String>> = HashMap::new();
    for (i, line) in read(&sentences_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, toks) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&sentences_path, i + 1, "expected id<TAB>tokens"))?;
        sentences.insert(
            id.to_string(),
            toks.split_whitespace().map(str::to_string).collect(),
        );
    }

    let pb_path = input.join("propbank.tsv");
    let mut propbank: HashMap<(String, usize), Vec<PbArg>> = HashMap::new();
    let mut pb_sentences: HashSet<String> = HashSet::new();
    for (i, line) in read(&pb_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 5 {
            return Err(parse_err(&pb_path, i + 1, "expected at least 5 tab-separated fields"));
        }
        pb_sentences.insert(f[0].to_string());
        let Ok(role) = f[4].trim().parse::<Role>() else {
            continue;
        };
        let head = match f.get(5).map(|s| s.trim()) {
            None | Some("-") | Some("") => None,
            Some(h) => Some(parse_index(&pb_path, i + 1, h)?),
        };
        propbank
            .entry((f[0].to_string(), parse_index(&pb_path, i + 1, f[1])?))
            .or_default()
            .push(PbArg {
                start: parse_index(&pb_path, i + 1, f[2])?,
                end: parse_index(&pb_path, i + 1, f[3])?,
                role,
                head,
            });
    }

    let spr_path = input.join("spr1.tsv");
    let spr_text = read(&spr_path)?;
    let mut lines = spr_text.lines().enumerate();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| parse_err(&spr_path, 1, "missing header"))?
        .1
        .split('\t')
        .map(str::trim)
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| parse_err(&spr_path, 1, format!("missing column {name}")))
    };
    let (c_split, c_sent, c_pred) = (col("Split")?, col("Sentence.ID")?, col("Pred.Token")?);
    let (c_begin, c_end) = (col("Arg.Tokens.Begin")?, col("Arg.Tokens.End")?);
    let (c_prop, c_app, c_resp) = (col("Property")?, col("Applicable")?, col("Response")?);
    let c_head = header.iter().position(|h| *h == "Arg.Head");

    // (split, sentence, predicate) -> (start, end) -> judgments
    type Key = (Split, String, usize);
    let mut spr: BTreeMap<Key, BTreeMap<(usize, usize), SprArg>> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let get = |c: usize| -> Result<&str> {
            f.get(c)
                .map(|s| s.trim())
                .ok_or_else(|| parse_err(&spr_path, i + 1, format!("missing field {}", header[c])))
        };
        let split: Split = get(c_split)?
            .to_lowercase()
            .parse()
            .map_err(|e: Error| parse_err(&spr_path, i + 1, e.to_string()))?;
        let property: Property = normalize_property(get(c_prop)?)
            .parse()
            .map_err(|e: String| parse_err(&spr_path, i + 1, e))?;
        let applicable = matches!(
            get(c_app)?.to_lowercase().as_str(),
            "true" | "1" | "yes" | "t"
        );
        let response = if applicable {
            let v: i64 = get(c_resp)?
                .parse()
                .map_err(|_| parse_err(&spr_path, i + 1, "response is not an integer"))?;
            if !(1..=5).contains(&v) {
                return Err(parse_err(&spr_path, i + 1, format!("response {v} outside 1..5")));
            }
            Some(v)
        } else {
            None
        };
        let key = (
            split,
            get(c_sent)?.to_string(),
            parse_index(&spr_path, i + 1, get(c_pred)?)?,
        );
        let span = (
            parse_index(&spr_path, i + 1, get(c_begin)?)?,
            parse_index(&spr_path, i + 1, get(c_end)?)?,
        );
        let arg = spr.entry(key).or_default().entry(span).or_default();
        if let Some(c) = c_head {
            if let Some(h) = f.get(c).map(|s| s.trim()).filter(|s| !s.is_empty() && *s != "-") {
                arg.head = Some(parse_index(&spr_path, i + 1, h)?);
            }
        }
        arg.responses.entry(property).or_default().push(response);
    }

    let mut summary = ConversionSummary {
        threshold,
        ..Default::default()
    };
    let mut per_split: HashMap<Split, (Vec<Sentence>, Vec<PredicateInstance>)> = HashMap::new();
    let mut dropped_sentences: HashMap<Split, HashSet<String>> = HashMap::new();
    for ((split, sid, pred), args) in spr {
        let stats = summary.split_mut(split);
        let Some(tokens) = sentences.get(&sid) else {
            return Err(Error::Data(format!("sentence {sid:?} missing from sentences.tsv")));
        };
        if !pb_sentences.contains(&sid) {
            dropped_sentences.entry(split).or_default().insert(sid);
            continue;
        }
        let Some(pb_args) = propbank.get(&(sid.clone(), pred)) else {
            stats.dropped_instances += 1;
            continue;
        };
        let mut spans: Vec<ArgumentSpan> = pb_args
            .iter()
            .map(|a| {
                let mut s = ArgumentSpan::new(a.start, a.end, Some(a.role));
                s.head_index = a.head;
                s
            })
            .collect();
        for ((start, end), arg) in args {
            let ratings: BTreeMap<Property, Rating> = arg
                .responses
                .iter()
                .map(|(&p, r)| (p, aggregate(r)))
                .collect();
            let binary = ratings
                .iter()
                .map(|(&p, &r)| Ok((p, policy.label(r)?.unwrap_or(0))))
                .collect::<Result<BTreeMap<_, _>>>()?;
            if let Some(span) = spans.iter_mut().find(|s| s.start == start && s.end == end) {
                span.protorole_ratings = ratings;
                span.binary = Some(binary);
                if span.head_index.is_none() {
                    span.head_index = arg.head;
                }
            } else if spans.iter().all(|s| end < s.start || start > s.end)
                && !(start..=end).contains(&pred)
                && start <= end
            {
                let mut span = ArgumentSpan::new(start, end, None);
                span.head_index = arg.head;
                span.protorole_ratings = ratings;
                span.binary = Some(binary);
                spans.push(span);
            } else {
                stats.dropped_arguments += 1;
            }
        }
        spans.sort_by_key(|s| s.start);
        let entry = per_split.entry(split).or_default();
        if !entry.0.iter().any(|s| s.id == sid) {
            entry.0.push(Sentence {
                id: sid.clone(),
                tokens: tokens.clone(),
            });
        }
        stats.arguments += spans.len();
        stats.instances += 1;
        entry.1.push(PredicateInstance {
            sentence_id: sid,
            predicate_index: pred,
            argument_spans: spans,
            gold_srl_tags: None,
        });
    }

    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    for split in Split::ALL {
        let (sents, insts) = per_split.remove(&split).unwrap_or_default();
        let stats = summary.split_mut(split);
        stats.sentences = sents.len();
        stats.dropped_sentences = dropped_sentences.get(&split).map_or(0, HashSet::len);
        let corpus = Corpus::new(split, sents, insts)?;
        write_corpus(&corpus, output_path(output, split))?;
    }
    Ok(summary)
}

pub(crate) fn output_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_corpus;

    fn write_source(dir: &Path) {
        fs::write(
            dir.join("sentences.tsv"),
            "s1\tThe cat ate the rat\ns2\tDogs bark\ns3\tBirds sing songs\n",
        )
        .unwrap();
        fs::write(
            dir.join("propbank.tsv"),
            "s1\t2\t0\t1\tARG0\t1\ns1\t2\t3\t4\tARG1\t4\ns1\t2\t0\t0\tARGM-TMP\t-\ns2\t1\t0\t0\tA0\t0\n",
        )
        .unwrap();
        let mut spr = String::from(
            "Split\tSentence.ID\tPred.Token\tArg.Tokens.Begin\tArg.Tokens.End\tProperty\tApplicable\tResponse\n",
        );
        spr += "train\ts1\t2\t0\t1\tawareness\tTrue\t5\n";
        spr += "train\ts1\t2\t0\t1\tawareness\tTrue\t2\n";
        spr += "train\ts1\t2\t3\t4\tawareness\tTrue\t3\n";
        spr += "train\ts1\t2\t3\t4\tcreated\tFalse\t1\n";
        spr += "dev\ts2\t1\t0\t0\tvolition\tTrue\t4\n";
        spr += "test\ts3\t1\t0\t0\tsentient\tTrue\t4\n";
        fs::write(dir.join("spr1.tsv"), spr).unwrap();
    }

    #[test]
    fn converts_and_filters() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_source(src.path());
        let summary = convert_source(src.path(), out.path(), 2).unwrap();
        assert_eq!(summary.train.sentences, 1);
        assert_eq!(summary.dev.sentences, 1);
        assert_eq!(summary.test.sentences, 0);
        assert_eq!(summary.test.dropped_sentences, 1);

        let train = load_corpus(out.path().join("train.jsonl"), Split::Train).unwrap();
        let inst = &train.instances[0];
        assert_eq!(inst.argument_spans.len(), 2);
        let a0 = &inst.argument_spans[0];
        // mean of 5 and 2 is 3.5, rounded half up
        assert_eq!(a0.protorole_ratings[&Property::Awareness], Rating::Score(4));
        assert_eq!(a0.head_index, Some(1));
        let a1 = &inst.argument_spans[1];
        assert_eq!(a1.protorole_ratings[&Property::Created], Rating::NotApplicable);
        assert_eq!(a1.binary.as_ref().unwrap()[&Property::Awareness], 1);
    }

    #[test]
    fn threshold_changes_only_binary_labels() {
        let src = tempfile::tempdir().unwrap();
        write_source(src.path());
        let out2 = tempfile::tempdir().unwrap();
        let out3 = tempfile::tempdir().unwrap();
        convert_source(src.path(), out2.path(), 2).unwrap();
        convert_source(src.path(), out3.path(), 3).unwrap();
        let a = load_corpus(out2.path().join("train.jsonl"), Split::Train).unwrap();
        let b = load_corpus(out3.path().join("train.jsonl"), Split::Train).unwrap();
        let strip = |c: &Corpus| {
            let mut c = c.clone();
            for i in &mut c.instances {
                for s in &mut i.argument_spans {
                    s.binary = None;
                }
            }
            c
        };
        assert_eq!(strip(&a), strip(&b));
        assert_ne!(a, b);
    }

    #[test]
    fn missing_source_file_is_io_error() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            convert_source(src.path(), out.path(), 2),
            Err(Error::Io { .. })
        ));
    }
}
