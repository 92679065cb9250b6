//! Per-token span, head and SRL classifiers, head selection and head diagnostics.

use serde::{Deserialize, Serialize};

use crate::corpus::{HeadTag, SpanTag, SrlTag};
use crate::encoder::EncodedSentence;
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::linalg::{argmax, one_hot, softmax};

/// Which optional blocks the SRL tagger sees after `encoded ⊕ indicator ⊕ position`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlInputs {
    pub span_features: bool,
    pub head_features: bool,
}

impl SrlInputs {
    pub fn width(&self, encoded: usize) -> usize {
        encoded
            + 2
            + if self.span_features { SpanTag::COUNT } else { 0 }
            + if self.head_features { HeadTag::COUNT } else { 0 }
    }
}

/// Per-token distributions from one linear+softmax tagger.
#[derive(Clone, Debug, PartialEq)]
pub struct TagDistributions {
    pub probs: Vec<Vec<f64>>,
}

impl TagDistributions {
    pub fn argmax(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }

    pub fn hardened(&self) -> Vec<Vec<f64>> {
        self.probs
            .iter()
            .map(|p| one_hot(argmax(p), p.len()))
            .collect()
    }
}

pub fn run_tagger(layer: &Linear, inputs: &[Vec<f64>]) -> Result<TagDistributions> {
    let probs = inputs
        .iter()
        .map(|x| {
            if x.len() != layer.in_dim() {
                return Err(Error::shape(format!(
                    "tagger expects {} inputs, got {}",
                    layer.in_dim(),
                    x.len()
                )));
            }
            Ok(softmax(&layer.forward(x)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TagDistributions { probs })
}

pub fn span_inputs(encoded: &EncodedSentence) -> Vec<Vec<f64>> {
    (0..encoded.len()).map(|t| encoded.token(t).to_vec()).collect()
}

/// `encoded_t ⊕ span_encoding_t` for the head tagger.
pub fn head_inputs(encoded: &EncodedSentence, span_encoding: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if span_encoding.len() != encoded.len() {
        return Err(Error::shape("span encoding length differs from sentence length"));
    }
    Ok((0..encoded.len())
        .map(|t| {
            let mut v = encoded.token(t).to_vec();
            v.extend_from_slice(&span_encoding[t]);
            v
        })
        .collect())
}

/// `encoded_t ⊕ indicator_t ⊕ position_t ⊕ [span one-hot] ⊕ [head one-hot]` for the SRL tagger.
pub fn srl_inputs(
    encoded: &EncodedSentence,
    predicate_index: usize,
    spans: Option<&[SpanTag]>,
    heads: Option<&[HeadTag]>,
) -> Vec<Vec<f64>> {
    (0..encoded.len())
        .map(|t| {
            let mut v = encoded.token(t).to_vec();
            v.push(f64::from(u8::from(t == predicate_index)));
            v.push(t as f64 - predicate_index as f64);
            if let Some(s) = spans {
                v.extend(one_hot(s[t].index(), SpanTag::COUNT));
            }
            if let Some(h) = heads {
                v.extend(one_hot(h[t].index(), HeadTag::COUNT));
            }
            v
        })
        .collect()
}

pub fn predict_span_tags(layer: &Linear, encoded: &EncodedSentence) -> Result<(Vec<SpanTag>, TagDistributions)> {
    let d = run_tagger(layer, &span_inputs(encoded))?;
    Ok((d.argmax().into_iter().map(SpanTag::from_index).collect(), d))
}

pub fn predict_head_tags(
    layer: &Linear,
    encoded: &EncodedSentence,
    span_encoding: &[Vec<f64>],
) -> Result<(Vec<HeadTag>, TagDistributions)> {
    let d = run_tagger(layer, &head_inputs(encoded, span_encoding)?)?;
    Ok((d.argmax().into_iter().map(HeadTag::from_index).collect(), d))
}

pub fn predict_srl_tags(
    layer: &Linear,
    encoded: &EncodedSentence,
    predicate_index: usize,
    spans: Option<&[SpanTag]>,
    heads: Option<&[HeadTag]>,
) -> Result<(Vec<SrlTag>, TagDistributions)> {
    let d = run_tagger(layer, &srl_inputs(encoded, predicate_index, spans, heads))?;
    Ok((d.argmax().into_iter().map(SrlTag::from_index).collect(), d))
}

/// For each span, the in-span token with the highest head probability; ties go right.
pub fn select_argument_heads(head_probs: &[f64], spans: &[(usize, usize)]) -> Vec<usize> {
    spans
        .iter()
        .map(|&(start, end)| {
            let mut best = start;
            for i in start..=end.min(head_probs.len().saturating_sub(1)) {
                if head_probs[i] >= head_probs[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Span used to look up a predicted head for a gold argument: the predicted span with the
/// largest token overlap (earliest on ties), else the gold span itself.
pub fn match_predicted_span(gold: (usize, usize), predicted: &[(usize, usize)]) -> (usize, usize) {
    let overlap = |p: &(usize, usize)| {
        let lo = gold.0.max(p.0);
        let hi = gold.1.min(p.1);
        if lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    };
    let mut best: Option<((usize, usize), usize)> = None;
    for p in predicted {
        let o = overlap(p);
        if o > 0 && best.is_none_or(|(_, b)| o > b) {
            best = Some((*p, o));
        }
    }
    best.map_or(gold, |(p, _)| p)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConsistencyReport {
    pub predicted_heads: usize,
    pub heads_outside_spans: usize,
    pub spans: usize,
    pub spans_without_head: usize,
    pub spans_with_multiple_heads: usize,
}

impl HeadConsistencyReport {
    pub fn merge(&mut self, other: &HeadConsistencyReport) {
        self.predicted_heads += other.predicted_heads;
        self.heads_outside_spans += other.heads_outside_spans;
        self.spans += other.spans;
        self.spans_without_head += other.spans_without_head;
        self.spans_with_multiple_heads += other.spans_with_multiple_heads;
    }

    fn rate(n: usize, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            n as f64 / d as f64
        }
    }

    pub fn outside_rate(&self) -> f64 {
        Self::rate(self.heads_outside_spans, self.predicted_heads)
    }

    pub fn zero_head_rate(&self) -> f64 {
        Self::rate(self.spans_without_head, self.spans)
    }

    pub fn multi_head_rate(&self) -> f64 {
        Self::rate(self.spans_with_multiple_heads, self.spans)
    }
}

pub fn head_consistency_report(tags: &[HeadTag], spans: &[(usize, usize)]) -> HeadConsistencyReport {
    let heads: Vec<usize> = tags
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == HeadTag::Head)
        .map(|(i, _)| i)
        .collect();
    let mut report = HeadConsistencyReport {
        predicted_heads: heads.len(),
        spans: spans.len(),
        ..Default::default()
    };
    for &h in &heads {
        if !spans.iter().any(|&(s, e)| s <= h && h <= e) {
            report.heads_outside_spans += 1;
        }
    }
    for &(s, e) in spans {
        match heads.iter().filter(|&&h| s <= h && h <= e).count() {
            0 => report.spans_without_head += 1,
            1 => {}
            _ => report.spans_with_multiple_heads += 1,
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use HeadTag::{Head as H, Other as O};

    #[test]
    fn head_selection_argmax() {
        assert_eq!(select_argument_heads(&[0.1, 0.1, 0.1, 0.9, 0.2], &[(3, 4)]), [3]);
    }

    #[test]
    fn head_selection_ties_go_right() {
        assert_eq!(select_argument_heads(&[0.1, 0.1, 0.1, 0.5, 0.5], &[(3, 4)]), [4]);
    }

    #[test]
    fn head_selection_single_token() {
        assert_eq!(select_argument_heads(&[0.9, 0.0, 0.3], &[(1, 1)]), [1]);
    }

    #[test]
    fn consistency_counts() {
        let r = head_consistency_report(&[O, O, O, O], &[(0, 1), (2, 3)]);
        assert_eq!((r.spans_without_head, r.heads_outside_spans), (2, 0));

        let r = head_consistency_report(&[H, O, O, O], &[(2, 3)]);
        assert_eq!(r.heads_outside_spans, 1);

        let r = head_consistency_report(&[O, H, H, O, H], &[(0, 2), (3, 4)]);
        assert_eq!(r.spans_with_multiple_heads, 1);
        assert_eq!(r.spans_without_head, 0);
        assert_eq!(r.predicted_heads, 3);
    }

    #[test]
    fn span_matching() {
        assert_eq!(match_predicted_span((2, 4), &[(0, 1), (3, 6)]), (3, 6));
        assert_eq!(match_predicted_span((2, 4), &[(0, 1)]), (2, 4));
        assert_eq!(match_predicted_span((2, 5), &[(1, 3), (4, 5)]), (1, 3));
    }
}
