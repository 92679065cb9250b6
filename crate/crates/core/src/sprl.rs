//! Predicate/argument pair representations and the bank of per-property binary classifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Property, PROPERTY_COUNT};
use crate::encoder::EncodedSentence;
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::linalg::{softmax, Matrix};

/// Widths of the blocks in `predicate ⊕ head ⊕ [span] ⊕ [sentence]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLayout {
    pub encoded: usize,
    pub span_embedding: Option<usize>,
    pub sentence_embedding: Option<usize>,
}

impl PairLayout {
    pub fn width(&self) -> usize {
        2 * self.encoded + self.span_embedding.unwrap_or(0) + self.sentence_embedding.unwrap_or(0)
    }
}

pub fn build_pair_representation(
    encoded: &EncodedSentence,
    predicate_index: usize,
    head_index: usize,
    layout: &PairLayout,
    span_embedding: Option<&[f64]>,
    sentence_embedding: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if encoded.width() != layout.encoded {
        return Err(Error::shape(format!(
            "encoded width {} differs from pair layout {}",
            encoded.width(),
            layout.encoded
        )));
    }
    if predicate_index >= encoded.len() || head_index >= encoded.len() {
        return Err(Error::shape("pair index outside sentence"));
    }
    let mut v = Vec::with_capacity(layout.width());
    v.extend_from_slice(encoded.token(predicate_index));
    v.extend_from_slice(encoded.token(head_index));
    for (name, want, got) in [
        ("span", layout.span_embedding, span_embedding),
        ("sentence", layout.sentence_embedding, sentence_embedding),
    ] {
        match (want, got) {
            (Some(w), Some(x)) if x.len() == w => v.extend_from_slice(x),
            (None, None) => {}
            (w, x) => {
                return Err(Error::shape(format!(
                    "{name} embedding: layout expects {w:?}, got {:?}",
                    x.map(<[f64]>::len)
                )))
            }
        }
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyPrediction {
    pub probability: f64,
    pub label: u8,
}

/// Eighteen independent linear+softmax classifiers, indexed by [`Property::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyBank {
    pub classifiers: Vec<Linear>,
}

impl PropertyBank {
    pub fn new<R: Rng>(width: usize, rng: &mut R) -> Self {
        PropertyBank {
            classifiers: (0..PROPERTY_COUNT).map(|_| Linear::new(2, width, rng)).collect(),
        }
    }

    pub fn zeros(width: usize) -> Self {
        PropertyBank {
            classifiers: (0..PROPERTY_COUNT).map(|_| Linear::zeros(2, width)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.classifiers[0].in_dim()
    }

    /// Two-class distributions `[p(0), p(1)]` per property.
    pub fn distributions(&self, pair: &[f64]) -> Result<Vec<Vec<f64>>> {
        if pair.len() != self.width() {
            return Err(Error::shape(format!(
                "pair width {} differs from classifier width {}",
                pair.len(),
                self.width()
            )));
        }
        Ok(self.classifiers.iter().map(|c| softmax(&c.forward(pair))).collect())
    }

    pub fn classify(&self, pair: &[f64]) -> Result<Vec<PropertyPrediction>> {
        Ok(self
            .distributions(pair)?
            .into_iter()
            .map(|p| PropertyPrediction {
                probability: p[1],
                label: u8::from(p[1] > p[0]),
            })
            .collect())
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (p, c) in Property::ALL.iter().zip(&self.classifiers) {
            c.visit(&format!("{prefix}.{}", p.name()), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for (p, c) in Property::ALL.iter().zip(self.classifiers.iter_mut()) {
            c.visit_mut(&format!("{prefix}.{}", p.name()), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{CellKind, EncoderConfig, EncoderParams, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoded(hidden: usize) -> EncodedSentence {
        let cfg = EncoderConfig {
            cell_kind: CellKind::GruLike,
            input_dim: 3,
            hidden_dim: hidden,
            num_layers: 1,
            dropout_rate: 0.0,
            use_post_projection: false,
        };
        let enc = EncoderParams::init(&cfg, 3).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.5, -0.3], vec![0.2, -1.0, 0.7], vec![-0.4, 0.1, 0.9]]);
        enc.encode(&x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn pair_widths() {
        let layout = PairLayout {
            encoded: 16,
            span_embedding: None,
            sentence_embedding: None,
        };
        assert_eq!(layout.width(), 32);
        let with_sentence = PairLayout {
            sentence_embedding: Some(768),
            ..layout
        };
        assert_eq!(with_sentence.width(), 800);
    }

    #[test]
    fn pair_order_matters() {
        let e = encoded(8);
        let layout = PairLayout {
            encoded: 16,
            span_embedding: None,
            sentence_embedding: None,
        };
        let a = build_pair_representation(&e, 0, 2, &layout, None, None).unwrap();
        let b = build_pair_representation(&e, 2, 0, &layout, None, None).unwrap();
        assert_eq!(a.len(), 32);
        if e.token(0) != e.token(2) {
            assert_ne!(a, b);
        }
        assert!(build_pair_representation(&e, 0, 2, &layout, Some(&[1.0]), None).is_err());
    }

    #[test]
    fn classifier_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bank = PropertyBank::new(4, &mut rng);
        let pair = [0.3, -0.2, 1.0, 0.5];
        let before = bank.classify(&pair).unwrap();
        assert_eq!(before.len(), 18);
        for d in bank.distributions(&pair).unwrap() {
            assert!((d[0] + d[1] - 1.0).abs() < 1e-12);
        }
        let k = Property::Volition.index();
        bank.classifiers[k] = Linear::zeros(2, 4);
        let after = bank.classify(&pair).unwrap();
        // tied scores fall to the negative class
        assert_eq!(after[k], PropertyPrediction { probability: 0.5, label: 0 });
        for (i, (a, b)) in before.iter().zip(&after).enumerate() {
            if i != k {
                assert_eq!(a, b);
            }
        }
    }
}
