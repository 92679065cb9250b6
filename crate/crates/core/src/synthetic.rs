//! A small generated corpus with matching static embeddings, for smoke runs and tests.
//!
//! Sentences follow a handful of clause templates (`the dog broke the vase with a stone`,
//! `mary said the boy ate the cake`, ...). Roles follow the template slots, heads are the
//! nouns, and proto-role ratings are a deterministic function of role, verb and noun class
//! with a little seeded noise on the ratings that do not cross the default threshold.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_corpus, ArgumentSpan, Corpus, PredicateInstance, Property, Rating, Role, Sentence, Split};
use crate::error::{Error, Result};

const ANIMATE: &[&str] = &["dog", "boy", "girl", "teacher", "farmer", "cat", "mary", "john"];
const OBJECTS: &[&str] = &["vase", "cake", "ball", "book", "stone", "letter", "bread", "box"];
const PLACES: &[&str] = &["park", "house", "river", "school", "garden"];
const DETS: &[&str] = &["the", "a", "this"];
const NAMES: &[&str] = &["mary", "john"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Verb {
    Broke,
    Ate,
    Threw,
    Built,
    Saw,
    Gave,
    Moved,
}

impl Verb {
    const ALL: [Verb; 7] = [Verb::Broke, Verb::Ate, Verb::Threw, Verb::Built, Verb::Saw, Verb::Gave, Verb::Moved];

    fn word(self) -> &'static str {
        match self {
            Verb::Broke => "broke",
            Verb::Ate => "ate",
            Verb::Threw => "threw",
            Verb::Built => "built",
            Verb::Saw => "saw",
            Verb::Gave => "gave",
            Verb::Moved => "moved",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Agent,
    Patient,
    Recipient,
    Instrument,
    Place,
    Content,
}

struct Builder {
    tokens: Vec<String>,
}

impl Builder {
    fn push(&mut self, w: &str) -> usize {
        self.tokens.push(w.to_owned());
        self.tokens.len() - 1
    }

    /// Noun phrase; returns (start, end, head).
    fn np(&mut self, rng: &mut ChaCha8Rng, noun: &str) -> (usize, usize, usize) {
        let start = self.tokens.len();
        if !NAMES.contains(&noun) {
            self.push(DETS.choose(rng).expect("dets"));
        }
        let head = self.push(noun);
        (start, head, head)
    }
}

fn ratings(slot: Slot, verb: Verb, animate: bool, rng: &mut ChaCha8Rng) -> BTreeMap<Property, Rating> {
    use Property::*;
    let hi = |rng: &mut ChaCha8Rng| Rating::Score(rng.gen_range(4..=5));
    let lo = |rng: &mut ChaCha8Rng| Rating::Score(rng.gen_range(1..=2));
    let mut m = BTreeMap::new();
    let mut set = |p: Property, on: bool, rng: &mut ChaCha8Rng| {
        m.insert(p, if on { hi(rng) } else { lo(rng) });
    };
    let agentive = slot == Slot::Agent;
    set(Awareness, agentive && animate, rng);
    set(Sentient, animate, rng);
    set(Volition, agentive && animate, rng);
    set(Instigation, agentive, rng);
    set(ExistsAsPhysical, slot != Slot::Content, rng);
    set(ExistedBefore, !(slot == Slot::Patient && verb == Verb::Built), rng);
    set(ExistedDuring, !(slot == Slot::Patient && verb == Verb::Built), rng);
    set(
        ExistedAfter,
        !(slot == Slot::Patient && matches!(verb, Verb::Ate | Verb::Broke)),
        rng,
    );
    set(Created, slot == Slot::Patient && verb == Verb::Built, rng);
    set(Destroyed, slot == Slot::Patient && matches!(verb, Verb::Ate | Verb::Broke), rng);
    set(
        ChangeOfState,
        slot == Slot::Patient && matches!(verb, Verb::Broke | Verb::Ate | Verb::Built),
        rng,
    );
    set(
        ChangeOfLocation,
        slot == Slot::Patient && matches!(verb, Verb::Threw | Verb::Moved | Verb::Gave),
        rng,
    );
    set(
        ChangesPossession,
        (slot == Slot::Patient || slot == Slot::Recipient) && verb == Verb::Gave,
        rng,
    );
    set(
        ManipulatedByAnother,
        matches!(slot, Slot::Patient | Slot::Instrument) && verb != Verb::Saw,
        rng,
    );
    set(
        MakesPhysicalContact,
        matches!(slot, Slot::Agent | Slot::Instrument) && verb != Verb::Saw,
        rng,
    );
    set(PredChangedArg, slot == Slot::Patient && verb != Verb::Saw, rng);
    set(Stationary, slot == Slot::Place, rng);
    if slot == Slot::Place {
        m.insert(LocationOfEvent, hi(rng));
        m.insert(Volition, Rating::NotApplicable);
    } else {
        m.insert(LocationOfEvent, lo(rng));
    }
    m
}

struct Clause {
    predicate: usize,
    spans: Vec<ArgumentSpan>,
}

fn span(start: usize, end: usize, head: usize, role: Role, ratings: BTreeMap<Property, Rating>) -> ArgumentSpan {
    let mut s = ArgumentSpan::new(start, end, Some(role)).with_head(head);
    s.protorole_ratings = ratings;
    s
}

/// `AGENT VERB PATIENT [to RECIPIENT | with INSTRUMENT | in PLACE]`, appended to `b`.
fn clause(b: &mut Builder, rng: &mut ChaCha8Rng) -> Clause {
    let verb = *Verb::ALL.choose(rng).expect("verbs");
    let agent = *ANIMATE.choose(rng).expect("animate");
    let (s0, e0, h0) = b.np(rng, agent);
    let predicate = b.push(verb.word());
    let patient_noun = if verb == Verb::Saw && rng.gen_bool(0.5) {
        *ANIMATE.choose(rng).expect("animate")
    } else {
        *OBJECTS.choose(rng).expect("objects")
    };
    let (s1, e1, h1) = b.np(rng, patient_noun);
    let mut spans = vec![
        span(s0, e0, h0, Role::A0, ratings(Slot::Agent, verb, true, rng)),
        span(s1, e1, h1, Role::A1, ratings(Slot::Patient, verb, ANIMATE.contains(&patient_noun), rng)),
    ];
    let extra: u8 = rng.gen_range(0..4);
    match (extra, verb) {
        (0, Verb::Gave) | (1, Verb::Gave) => {
            let start = b.push("to");
            let noun = *ANIMATE.choose(rng).expect("animate");
            let (_, end, head) = b.np(rng, noun);
            spans.push(span(start, end, head, Role::A2, ratings(Slot::Recipient, verb, true, rng)));
        }
        (1, _) => {
            let start = b.push("with");
            let noun = *OBJECTS.choose(rng).expect("objects");
            let (_, end, head) = b.np(rng, noun);
            spans.push(span(start, end, head, Role::A3, ratings(Slot::Instrument, verb, false, rng)));
        }
        (2, _) => {
            let start = b.push("in");
            let noun = *PLACES.choose(rng).expect("places");
            let (_, end, head) = b.np(rng, noun);
            spans.push(span(start, end, head, Role::A4, ratings(Slot::Place, verb, false, rng)));
        }
        _ => {}
    }
    Clause { predicate, spans }
}

/// Generate sentences until `instances` predicate instances exist.
pub fn synthetic_corpus(split: Split, instances: usize, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (split as u64).wrapping_mul(0x9e37_79b9));
    let mut sentences = Vec::new();
    let mut out = Vec::new();
    let mut n = 0;
    while out.len() < instances {
        let id = format!("{}-{n:04}", split.as_str());
        n += 1;
        let mut b = Builder { tokens: Vec::new() };
        let mut clauses = Vec::new();
        if rng.gen_bool(0.25) && instances - out.len() >= 2 {
            // `NAME said CLAUSE`: the reporting verb takes the embedded clause as A1.
            let name = *NAMES.choose(&mut rng).expect("names");
            let (s0, e0, h0) = b.np(&mut rng, name);
            let said = b.push("said");
            let start = b.tokens.len();
            let inner = clause(&mut b, &mut rng);
            let end = b.tokens.len() - 1;
            let mut a0 = ArgumentSpan::new(s0, e0, Some(Role::A0)).with_head(h0);
            a0.protorole_ratings = ratings(Slot::Agent, Verb::Saw, true, &mut rng);
            let mut a1 = ArgumentSpan::new(start, end, Some(Role::A1)).with_head(inner.predicate);
            a1.protorole_ratings = ratings(Slot::Content, Verb::Saw, false, &mut rng);
            clauses.push(Clause {
                predicate: said,
                spans: vec![a0, a1],
            });
            clauses.push(inner);
        } else {
            clauses.push(clause(&mut b, &mut rng));
        }
        for c in clauses {
            out.push(PredicateInstance {
                sentence_id: id.clone(),
                predicate_index: c.predicate,
                argument_spans: c.spans,
                gold_srl_tags: None,
            });
        }
        sentences.push(Sentence { id, tokens: b.tokens });
    }
    Corpus::new(split, sentences, out)
}

/// Every word the generator can emit.
pub fn vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&str> = ANIMATE
        .iter()
        .chain(OBJECTS)
        .chain(PLACES)
        .chain(DETS)
        .copied()
        .chain(Verb::ALL.iter().map(|v| v.word()))
        .chain(["said", "to", "with", "in"])
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Random unit-scale vectors for the generator's vocabulary, in the static embedding format.
pub fn write_embeddings(path: &Path, dim: usize, seed: u64) -> Result<()> {
    if dim == 0 {
        return Err(Error::config("embedding dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for word in vocabulary() {
        let v: Vec<String> = (0..dim).map(|_| format!("{:.6}", rng.gen_range(-1.0..1.0))).collect();
        writeln!(w, "{word} {}", v.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct SyntheticPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub embeddings: PathBuf,
}

/// Write train/dev/test corpora and an embedding table into `dir`.
pub fn write_dataset(dir: &Path, sizes: [usize; 3], dim: usize, seed: u64) -> Result<SyntheticPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = SyntheticPaths {
        train: dir.join("train.jsonl"),
        dev: dir.join("dev.jsonl"),
        test: dir.join("test.jsonl"),
        embeddings: dir.join("embeddings.txt"),
    };
    for (split, n, path) in [
        (Split::Train, sizes[0], &paths.train),
        (Split::Dev, sizes[1], &paths.dev),
        (Split::Test, sizes[2], &paths.test),
    ] {
        write_corpus(&synthetic_corpus(split, n, seed)?, path)?;
    }
    write_embeddings(&paths.embeddings, dim, seed)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, LabelPolicy};
    use crate::features::StaticEmbeddings;

    #[test]
    fn exact_instance_count_and_validity() {
        for n in [1, 10, 57] {
            let c = synthetic_corpus(Split::Train, n, 3).unwrap();
            assert_eq!(c.len(), n);
            c.validate().unwrap();
        }
    }

    #[test]
    fn deterministic_and_split_dependent() {
        let a = synthetic_corpus(Split::Train, 20, 1).unwrap();
        assert_eq!(a, synthetic_corpus(Split::Train, 20, 1).unwrap());
        assert_ne!(a.sentences, synthetic_corpus(Split::Dev, 20, 1).unwrap().sentences);
    }

    #[test]
    fn labels_are_mixed() {
        let c = synthetic_corpus(Split::Train, 200, 5).unwrap();
        let policy = LabelPolicy::default();
        let mut pos = [0usize; 18];
        let mut tot = [0usize; 18];
        for inst in &c.instances {
            for s in inst.argument_spans.iter().filter(|s| s.has_protoroles()) {
                for (k, l) in s.labels(&policy).unwrap().iter().enumerate() {
                    if let Some(l) = l {
                        tot[k] += 1;
                        pos[k] += usize::from(*l);
                    }
                }
            }
        }
        for k in 0..18 {
            assert!(pos[k] > 0 && pos[k] < tot[k], "property {k}: {}/{}", pos[k], tot[k]);
        }
    }

    #[test]
    fn dataset_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_dataset(dir.path(), [12, 4, 4], 6, 9).unwrap();
        assert_eq!(load_corpus(&p.train, Split::Train).unwrap().len(), 12);
        let emb = StaticEmbeddings::load(&p.embeddings).unwrap();
        assert_eq!(emb.dimension(), 6);
        assert!(vocabulary().iter().all(|w| emb.contains(w)));
    }
}
