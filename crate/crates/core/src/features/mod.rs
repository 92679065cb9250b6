//! Token, span and sentence vectors fed to the encoder and the proto-role classifiers.

mod contextual;
mod embeddings;

use std::collections::HashSet;

pub use self::contextual::{
    pool_pieces, resolve_contextual, ContextualEncoder, ContextualOutput, PieceCache,
    ToyContextEncoder, CACHE_DIR_ENV,
};
pub use self::embeddings::StaticEmbeddings;

use crate::corpus::{ArgumentSpan, Sentence};
use crate::error::{Error, Result};
use crate::linalg::{mean_of, Matrix};

/// English stopwords with prepositions and pronouns removed, so those still count toward span means.
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn english() -> Self {
        Stopwords(
            include_str!("../../data/stopwords_en.txt")
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Stopwords(HashSet::new())
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Stopwords(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub enum EmbeddingProvider {
    Static(StaticEmbeddings),
    Contextual(Box<dyn ContextualEncoder>),
}

impl EmbeddingProvider {
    pub fn is_static(&self) -> bool {
        matches!(self, EmbeddingProvider::Static(_))
    }

    pub fn dimension(&self) -> usize {
        match self {
            EmbeddingProvider::Static(t) => t.dimension(),
            EmbeddingProvider::Contextual(c) => c.dimension(),
        }
    }

    pub fn sentence_dimension(&self) -> usize {
        match self {
            EmbeddingProvider::Static(t) => t.dimension(),
            EmbeddingProvider::Contextual(c) => c.summary_dimension(),
        }
    }

    /// Whether `encode` may be called from several threads at once.
    pub fn supports_concurrent_calls(&self) -> bool {
        match self {
            EmbeddingProvider::Static(_) => true,
            EmbeddingProvider::Contextual(c) => c.supports_concurrent_calls(),
        }
    }

    /// Per-token vectors plus the sentence vector.
    pub fn encode(&self, sentence: &Sentence) -> Result<ContextualOutput> {
        match self {
            EmbeddingProvider::Static(t) => {
                let tokens: Vec<Vec<f64>> = sentence.tokens.iter().map(|w| t.lookup(w)).collect();
                let summary = mean_of(tokens.iter().map(Vec::as_slice), t.dimension());
                Ok(ContextualOutput { tokens, summary })
            }
            EmbeddingProvider::Contextual(c) => {
                let out = c.encode(sentence)?;
                if out.tokens.len() != sentence.len() {
                    return Err(Error::Alignment {
                        sentence: sentence.id.clone(),
                        message: format!(
                            "encoder returned {} vectors for {} tokens",
                            out.tokens.len(),
                            sentence.len()
                        ),
                    });
                }
                Ok(out)
            }
        }
    }

    pub fn sentence_embedding(&self, sentence: &Sentence) -> Result<Vec<f64>> {
        Ok(self.encode(sentence)?.summary)
    }
}

/// Signed offset of a token from the predicate; the predicate itself is 0.
pub fn relative_position(token_index: usize, predicate_index: usize) -> i64 {
    token_index as i64 - predicate_index as i64
}

/// Mean of in-span token vectors skipping stopwords; falls back to all span tokens.
pub fn span_embedding(
    sentence: &Sentence,
    span: &ArgumentSpan,
    token_vectors: &[Vec<f64>],
    stopwords: &Stopwords,
) -> Vec<f64> {
    let dim = token_vectors.first().map_or(0, Vec::len);
    let content: Vec<&[f64]> = (span.start..=span.end)
        .filter(|&i| !stopwords.contains(&sentence.tokens[i]))
        .map(|i| token_vectors[i].as_slice())
        .collect();
    if content.is_empty() {
        mean_of(token_vectors[span.start..=span.end].iter().map(Vec::as_slice), dim)
    } else {
        mean_of(content, dim)
    }
}

/// Token feature rows: embedding, predicate indicator, relative position.
pub fn token_features(token_vectors: &[Vec<f64>], predicate_index: usize) -> Matrix {
    let dim = token_vectors.first().map_or(0, Vec::len);
    let mut m = Matrix::zeros(token_vectors.len(), dim + 2);
    for (i, v) in token_vectors.iter().enumerate() {
        let row = m.row_mut(i);
        row[..dim].copy_from_slice(v);
        row[dim] = f64::from(u8::from(i == predicate_index));
        row[dim + 1] = relative_position(i, predicate_index) as f64;
    }
    m
}

pub fn build_token_features(
    sentence: &Sentence,
    predicate_index: usize,
    provider: &EmbeddingProvider,
) -> Result<Matrix> {
    if predicate_index >= sentence.len() {
        return Err(Error::shape(format!(
            "predicate index {predicate_index} outside sentence {}",
            sentence.id
        )));
    }
    let out = provider.encode(sentence)?;
    Ok(token_features(&out.tokens, predicate_index))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(words: &[&str]) -> Sentence {
        Sentence {
            id: "s".into(),
            tokens: words.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn table() -> StaticEmbeddings {
        StaticEmbeddings::from_entries(
            4,
            vec![
                ("the".to_string(), vec![1.0, 0.0, 0.0, 0.0]),
                ("cat".to_string(), vec![0.0, 2.0, 0.0, 0.0]),
                ("ate".to_string(), vec![0.0, 0.0, 3.0, 0.0]),
                ("rat".to_string(), vec![0.0, 0.0, 0.0, 4.0]),
                ("a".to_string(), vec![3.0, 0.0, 0.0, 0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn relative_position_examples() {
        assert_eq!(relative_position(4, 2), 2);
        assert_eq!(relative_position(2, 2), 0);
        assert_eq!(relative_position(0, 2), -2);
    }

    #[test]
    fn span_embedding_filters_stopwords() {
        let s = sentence(&["The", "cat", "ate", "the", "rat"]);
        let vecs: Vec<Vec<f64>> = s.tokens.iter().map(|t| table().lookup(t)).collect();
        let sw = Stopwords::english();
        let span = ArgumentSpan::new(3, 4, None);
        assert_eq!(span_embedding(&s, &span, &vecs, &sw), vecs[4]);
        let single = ArgumentSpan::new(1, 1, None);
        assert_eq!(span_embedding(&s, &single, &vecs, &sw), vecs[1]);
    }

    #[test]
    fn span_embedding_of_only_stopwords_uses_all_tokens() {
        let s = sentence(&["the", "a"]);
        let vecs: Vec<Vec<f64>> = s.tokens.iter().map(|t| table().lookup(t)).collect();
        let span = ArgumentSpan::new(0, 1, None);
        assert_eq!(
            span_embedding(&s, &span, &vecs, &Stopwords::english()),
            vec![2.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn stopword_list_keeps_prepositions_and_pronouns() {
        let sw = Stopwords::english();
        assert!(sw.contains("the"));
        assert!(sw.contains("The"));
        for w in ["in", "of", "he", "they", "with", "it"] {
            assert!(!sw.contains(w), "{w}");
        }
    }

    #[test]
    fn sentence_embedding_static_is_mean() {
        let p = EmbeddingProvider::Static(table());
        assert_eq!(p.sentence_embedding(&sentence(&["cat"])).unwrap(), vec![0.0, 2.0, 0.0, 0.0]);
        assert_eq!(
            p.sentence_embedding(&sentence(&["cat", "rat"])).unwrap(),
            vec![0.0, 1.0, 0.0, 2.0]
        );
    }

    #[test]
    fn sentence_embedding_matches_whole_span_embedding() {
        let p = EmbeddingProvider::Static(table());
        let s = sentence(&["The", "cat", "ate", "the", "rat", "zzxqv"]);
        let vecs = p.encode(&s).unwrap().tokens;
        let whole = ArgumentSpan::new(0, s.len() - 1, None);
        assert_eq!(
            p.sentence_embedding(&s).unwrap(),
            span_embedding(&s, &whole, &vecs, &Stopwords::empty())
        );
    }

    #[test]
    fn token_feature_layout() {
        let p = EmbeddingProvider::Static(table());
        let s = sentence(&["The", "cat", "ate", "the", "rat"]);
        let m = build_token_features(&s, 2, &p).unwrap();
        assert_eq!(m.shape(), (5, 6));
        let indicator: f64 = (0..5).map(|i| m.row(i)[4]).sum();
        assert_eq!(indicator, 1.0);
        let pos: Vec<f64> = (0..5).map(|i| m.row(i)[5]).collect();
        assert_eq!(pos, [-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(build_token_features(&s, 5, &p).is_err());
    }
}
