//! Tag inventories and BIO conversions between argument spans and per-token tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ArgumentSpan;
use crate::error::{Error, Result};

/// Numbered PropBank argument label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    A0,
    A1,
    A2,
    A3,
    A4,
    A5,
}

impl Role {
    pub const ALL: [Role; 6] = [Role::A0, Role::A1, Role::A2, Role::A3, Role::A4, Role::A5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        ["A0", "A1", "A2", "A3", "A4", "A5"][self.index()]
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let normalized = match s.strip_prefix("ARG") {
            Some(n) => format!("A{n}"),
            None => s.to_string(),
        };
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == normalized)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

/// Argument-specific BIO tag. Index order is B-V, B-A0, I-A0, ..., B-A5, I-A5, O.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SrlTag {
    Verb,
    Begin(Role),
    Inside(Role),
    Outside,
}

impl SrlTag {
    pub const COUNT: usize = 14;

    pub const ALL: [SrlTag; 14] = [
        SrlTag::Verb,
        SrlTag::Begin(Role::A0),
        SrlTag::Inside(Role::A0),
        SrlTag::Begin(Role::A1),
        SrlTag::Inside(Role::A1),
        SrlTag::Begin(Role::A2),
        SrlTag::Inside(Role::A2),
        SrlTag::Begin(Role::A3),
        SrlTag::Inside(Role::A3),
        SrlTag::Begin(Role::A4),
        SrlTag::Inside(Role::A4),
        SrlTag::Begin(Role::A5),
        SrlTag::Inside(Role::A5),
        SrlTag::Outside,
    ];

    pub fn index(self) -> usize {
        match self {
            SrlTag::Verb => 0,
            SrlTag::Begin(r) => 1 + 2 * r.index(),
            SrlTag::Inside(r) => 2 + 2 * r.index(),
            SrlTag::Outside => 13,
        }
    }

    pub fn from_index(i: usize) -> SrlTag {
        SrlTag::ALL[i]
    }

    pub fn name(self) -> String {
        match self {
            SrlTag::Verb => "B-V".to_string(),
            SrlTag::Begin(r) => format!("B-{r}"),
            SrlTag::Inside(r) => format!("I-{r}"),
            SrlTag::Outside => "O".to_string(),
        }
    }

    /// Role-erased tag.
    pub fn nameless(self) -> SpanTag {
        match self {
            SrlTag::Verb => SpanTag::Verb,
            SrlTag::Begin(_) => SpanTag::Begin,
            SrlTag::Inside(_) => SpanTag::Inside,
            SrlTag::Outside => SpanTag::Outside,
        }
    }
}

/// Role-less span tag used by the span predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpanTag {
    Begin,
    Inside,
    Verb,
    Outside,
}

impl SpanTag {
    pub const COUNT: usize = 4;
    pub const ALL: [SpanTag; 4] = [SpanTag::Begin, SpanTag::Inside, SpanTag::Verb, SpanTag::Outside];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> SpanTag {
        SpanTag::ALL[i]
    }

    pub fn name(self) -> &'static str {
        ["B-A", "I-A", "B-V", "O"][self.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadTag {
    Head,
    Other,
}

impl HeadTag {
    pub const COUNT: usize = 2;
    pub const ALL: [HeadTag; 2] = [HeadTag::Head, HeadTag::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> HeadTag {
        HeadTag::ALL[i]
    }

    pub fn name(self) -> &'static str {
        ["H", "O"][self.index()]
    }
}

macro_rules! string_serde {
    ($ty:ty, $all:expr) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                $all.into_iter()
                    .find(|t| t.name() == s)
                    .ok_or_else(|| format!("unknown tag {s:?}"))
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(SrlTag, SrlTag::ALL);
string_serde!(SpanTag, SpanTag::ALL);
string_serde!(HeadTag, HeadTag::ALL);

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_disjoint(spans: &[ArgumentSpan]) -> Result<()> {
    let mut sorted: Vec<&ArgumentSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(Error::OverlappingSpans(
                pair[0].start,
                pair[0].end,
                pair[1].start,
                pair[1].end,
            ));
        }
    }
    Ok(())
}

/// Encode role-labelled spans as a length-`len` BIO sequence.
pub fn spans_to_srl_tags(
    spans: &[ArgumentSpan],
    predicate_index: usize,
    len: usize,
) -> Result<Vec<SrlTag>> {
    check_disjoint(spans)?;
    let mut tags = vec![SrlTag::Outside; len];
    for span in spans {
        if span.end >= len || span.start > span.end {
            return Err(Error::shape(format!(
                "span [{},{}] outside sentence of length {len}",
                span.start, span.end
            )));
        }
        let role = span.role.ok_or(Error::MissingRole {
            start: span.start,
            end: span.end,
        })?;
        tags[span.start] = SrlTag::Begin(role);
        for tag in &mut tags[span.start + 1..=span.end] {
            *tag = SrlTag::Inside(role);
        }
    }
    if predicate_index >= len {
        return Err(Error::shape(format!(
            "predicate index {predicate_index} outside sentence of length {len}"
        )));
    }
    if spans.iter().any(|s| s.contains(predicate_index)) {
        return Err(Error::shape(format!(
            "predicate index {predicate_index} lies inside an argument span"
        )));
    }
    tags[predicate_index] = SrlTag::Verb;
    Ok(tags)
}

/// Greedy BIO decoding. Orphan inside-tags open a new span; the first B-V is the predicate.
pub fn srl_tags_to_spans(tags: &[SrlTag]) -> (Option<usize>, Vec<ArgumentSpan>) {
    let mut predicate = None;
    let mut spans: Vec<ArgumentSpan> = Vec::new();
    let mut open: Option<Role> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            SrlTag::Begin(role) => {
                spans.push(ArgumentSpan::new(i, i, Some(role)));
                open = Some(role);
            }
            SrlTag::Inside(role) if open == Some(role) => {
                spans.last_mut().expect("open span").end = i;
            }
            SrlTag::Inside(role) => {
                spans.push(ArgumentSpan::new(i, i, Some(role)));
                open = Some(role);
            }
            SrlTag::Verb => {
                if predicate.is_none() {
                    predicate = Some(i);
                }
                open = None;
            }
            SrlTag::Outside => open = None,
        }
    }
    (predicate, spans)
}

pub fn srl_to_nameless_tags(tags: &[SrlTag]) -> Vec<SpanTag> {
    tags.iter().map(|t| t.nameless()).collect()
}

/// Decode role-less spans from span tags, with the same orphan repair as [`srl_tags_to_spans`].
pub fn span_tags_to_spans(tags: &[SpanTag]) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut open = false;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            SpanTag::Begin => {
                spans.push((i, i));
                open = true;
            }
            SpanTag::Inside if open => spans.last_mut().expect("open span").1 = i,
            SpanTag::Inside => {
                spans.push((i, i));
                open = true;
            }
            SpanTag::Verb | SpanTag::Outside => open = false,
        }
    }
    spans
}

/// Per-token head tags marking the head of every span that has one.
pub fn spans_to_head_tags(spans: &[ArgumentSpan], len: usize) -> Vec<HeadTag> {
    let mut tags = vec![HeadTag::Other; len];
    for h in spans.iter().filter_map(|s| s.head_index) {
        if h < len {
            tags[h] = HeadTag::Head;
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, role: Role) -> ArgumentSpan {
        ArgumentSpan::new(start, end, Some(role))
    }

    #[test]
    fn inventories_have_expected_sizes() {
        assert_eq!(SrlTag::ALL.len(), 14);
        assert_eq!(SpanTag::ALL.len(), 4);
        assert_eq!(HeadTag::ALL.len(), 2);
        for (i, t) in SrlTag::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.name().parse::<SrlTag>().unwrap(), *t);
        }
    }

    #[test]
    fn encode_single_span() {
        let tags = spans_to_srl_tags(&[span(3, 4, Role::A1)], 2, 5).unwrap();
        let names: Vec<String> = tags.iter().map(|t| t.name()).collect();
        assert_eq!(names, ["O", "O", "B-V", "B-A1", "I-A1"]);
    }

    #[test]
    fn encode_without_spans() {
        let tags = spans_to_srl_tags(&[], 1, 3).unwrap();
        assert_eq!(tags, [SrlTag::Outside, SrlTag::Verb, SrlTag::Outside]);
    }

    #[test]
    fn encode_rejects_overlap() {
        let err = spans_to_srl_tags(&[span(0, 2, Role::A0), span(2, 3, Role::A1)], 4, 5);
        assert!(matches!(err, Err(Error::OverlappingSpans(..))));
    }

    #[test]
    fn encode_rejects_missing_role() {
        let err = spans_to_srl_tags(&[ArgumentSpan::new(0, 0, None)], 1, 2);
        assert!(matches!(err, Err(Error::MissingRole { .. })));
    }

    #[test]
    fn decode_inverse() {
        let tags: Vec<SrlTag> = ["O", "O", "B-V", "B-A1", "I-A1"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let (pred, spans) = srl_tags_to_spans(&tags);
        assert_eq!(pred, Some(2));
        assert_eq!(spans, vec![span(3, 4, Role::A1)]);
    }

    #[test]
    fn decode_repairs_orphan_inside() {
        let tags = [SrlTag::Inside(Role::A0), SrlTag::Outside, SrlTag::Verb];
        let (pred, spans) = srl_tags_to_spans(&tags);
        assert_eq!(pred, Some(2));
        assert_eq!(spans, vec![span(0, 0, Role::A0)]);
    }

    #[test]
    fn decode_inside_with_other_role_opens_new_span() {
        let tags = [SrlTag::Begin(Role::A0), SrlTag::Inside(Role::A1), SrlTag::Inside(Role::A1)];
        let (_, spans) = srl_tags_to_spans(&tags);
        assert_eq!(spans, vec![span(0, 0, Role::A0), span(1, 2, Role::A1)]);
    }

    #[test]
    fn decode_all_outside() {
        let (pred, spans) = srl_tags_to_spans(&[SrlTag::Outside; 4]);
        assert_eq!(pred, None);
        assert!(spans.is_empty());
    }

    #[test]
    fn nameless_erases_roles() {
        let tags = [SrlTag::Outside, SrlTag::Verb, SrlTag::Begin(Role::A0), SrlTag::Inside(Role::A0)];
        assert_eq!(
            srl_to_nameless_tags(&tags),
            [SpanTag::Outside, SpanTag::Verb, SpanTag::Begin, SpanTag::Inside]
        );
        assert_eq!(srl_to_nameless_tags(&[SrlTag::Outside; 3]), [SpanTag::Outside; 3]);
    }

    #[test]
    fn nameless_spans_match_role_erased_spans() {
        let spans = vec![span(0, 1, Role::A0), span(3, 5, Role::A2)];
        let tags = spans_to_srl_tags(&spans, 2, 6).unwrap();
        let nameless = span_tags_to_spans(&srl_to_nameless_tags(&tags));
        let erased: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(nameless, erased);
    }
}
