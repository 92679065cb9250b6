//! Adapters for contextual encoders. The encoder weights are never trained here.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// Environment variable naming the directory that relative cache identifiers resolve against.
pub const CACHE_DIR_ENV: &str = "PROTOSRL_CACHE_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct ContextualOutput {
    pub tokens: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

pub trait ContextualEncoder: Send + Sync {
    fn identifier(&self) -> String;

    fn dimension(&self) -> usize;

    fn summary_dimension(&self) -> usize {
        self.dimension()
    }

    /// Backends wrapping a live model may not be reentrant; callers must check this.
    fn supports_concurrent_calls(&self) -> bool;

    fn encode(&self, sentence: &Sentence) -> Result<ContextualOutput>;
}

/// Mean-pool word-piece vectors back to corpus tokens.
pub fn pool_pieces(
    sentence: &Sentence,
    pieces: &[Vec<f64>],
    piece_to_token: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let align_err = |message: String| Error::Alignment {
        sentence: sentence.id.clone(),
        message,
    };
    if pieces.len() != piece_to_token.len() {
        return Err(align_err(format!(
            "{} pieces but {} alignment entries",
            pieces.len(),
            piece_to_token.len()
        )));
    }
    let dim = pieces.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; sentence.len()];
    let mut counts = vec![0usize; sentence.len()];
    for (piece, &t) in pieces.iter().zip(piece_to_token) {
        if t >= sentence.len() {
            return Err(align_err(format!("piece aligned to token {t} beyond sentence end")));
        }
        if piece.len() != dim {
            return Err(align_err("pieces have inconsistent widths".into()));
        }
        for (s, v) in sums[t].iter_mut().zip(piece) {
            *s += v;
        }
        counts[t] += 1;
    }
    if let Some(t) = counts.iter().position(|&c| c == 0) {
        return Err(align_err(format!("token {t} ({:?}) has no pieces", sentence.tokens[t])));
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|x| *x /= c as f64);
    }
    Ok(sums)
}

#[derive(Deserialize)]
struct CacheEntry {
    sentence_id: String,
    pieces: Vec<Vec<f64>>,
    piece_to_token: Vec<usize>,
    summary: Vec<f64>,
}

/// Piece vectors precomputed by an external contextual model, one JSON object per sentence:
/// `{"sentence_id", "pieces": [[f]], "piece_to_token": [int], "summary": [f]}`.
pub struct PieceCache {
    path: PathBuf,
    dim: usize,
    summary_dim: usize,
    entries: HashMap<String, CacheEntry>,
}

impl PieceCache {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        let (mut dim, mut summary_dim) = (None, None);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let d = entry.pieces.first().map_or(0, Vec::len);
            if *dim.get_or_insert(d) != d || *summary_dim.get_or_insert(entry.summary.len()) != entry.summary.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "vector width differs from earlier entries".into(),
                });
            }
            entries.insert(entry.sentence_id.clone(), entry);
        }
        Ok(PieceCache {
            path: path.to_path_buf(),
            dim: dim.unwrap_or(0),
            summary_dim: summary_dim.unwrap_or(0),
            entries,
        })
    }
}

impl ContextualEncoder for PieceCache {
    fn identifier(&self) -> String {
        format!("cache:{}", self.path.display())
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn summary_dimension(&self) -> usize {
        self.summary_dim
    }

    fn supports_concurrent_calls(&self) -> bool {
        true
    }

    fn encode(&self, sentence: &Sentence) -> Result<ContextualOutput> {
        let entry = self.entries.get(&sentence.id).ok_or_else(|| Error::Alignment {
            sentence: sentence.id.clone(),
            message: format!("not present in {}", self.path.display()),
        })?;
        Ok(ContextualOutput {
            tokens: pool_pieces(sentence, &entry.pieces, &entry.piece_to_token)?,
            summary: entry.summary.clone(),
        })
    }
}

/// Deterministic stand-in for a contextual model: each token vector mixes a hashed type
/// vector with those of its neighbours, and the summary is a squashed mean.
#[derive(Clone, Debug)]
pub struct ToyContextEncoder {
    dim: usize,
}

impl ToyContextEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("toy encoder dimension must be positive"));
        }
        Ok(ToyContextEncoder { dim })
    }

    fn type_vector(&self, token: &str) -> Vec<f64> {
        // FNV-1a, stable across platforms and releases
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in token.to_lowercase().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl ContextualEncoder for ToyContextEncoder {
    fn identifier(&self) -> String {
        format!("toy:{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn supports_concurrent_calls(&self) -> bool {
        true
    }

    fn encode(&self, sentence: &Sentence) -> Result<ContextualOutput> {
        let types: Vec<Vec<f64>> = sentence.tokens.iter().map(|t| self.type_vector(t)).collect();
        let n = types.len();
        let tokens: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..self.dim)
                    .map(|k| {
                        let left = if i > 0 { types[i - 1][k] } else { 0.0 };
                        let right = if i + 1 < n { types[i + 1][k] } else { 0.0 };
                        (types[i][k] + 0.5 * (left + right)).tanh()
                    })
                    .collect()
            })
            .collect();
        let summary = (0..self.dim)
            .map(|k| (tokens.iter().map(|v| v[k]).sum::<f64>() / n as f64 * 2.0).tanh())
            .collect();
        Ok(ContextualOutput { tokens, summary })
    }
}

/// Build an encoder from an identifier: `toy:<dim>` or `cache:<path>`. Relative cache paths
/// resolve against `$PROTOSRL_CACHE_DIR` when it is set.
pub fn resolve_contextual(identifier: &str) -> Result<Box<dyn ContextualEncoder>> {
    match identifier.split_once(':') {
        Some(("toy", dim)) => {
            let dim = dim
                .parse()
                .map_err(|_| Error::config(format!("bad toy encoder dimension {dim:?}")))?;
            Ok(Box::new(ToyContextEncoder::new(dim)?))
        }
        Some(("cache", path)) => {
            let mut p = PathBuf::from(path);
            if p.is_relative() {
                if let Ok(dir) = std::env::var(CACHE_DIR_ENV) {
                    p = Path::new(&dir).join(p);
                }
            }
            if !p.exists() {
                return Err(Error::config(format!(
                    "contextual encoder cache {} is unavailable",
                    p.display()
                )));
            }
            Ok(Box::new(PieceCache::load(p)?))
        }
        _ => Err(Error::config(format!(
            "unknown contextual encoder {identifier:?}; expected toy:<dim> or cache:<path>"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn sentence(id: &str, words: &[&str]) -> Sentence {
        Sentence {
            id: id.into(),
            tokens: words.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn toy_shape_and_determinism() {
        let enc = ToyContextEncoder::new(6).unwrap();
        let s = sentence("a", &["the", "bank", "closed"]);
        let out = enc.encode(&s).unwrap();
        assert_eq!(out.tokens.len(), 3);
        assert!(out.tokens.iter().all(|v| v.len() == 6));
        assert_eq!(out.summary.len(), 6);
        assert_eq!(enc.encode(&s).unwrap(), out);
    }

    #[test]
    fn toy_vectors_depend_on_context() {
        let enc = ToyContextEncoder::new(16).unwrap();
        let a = enc.encode(&sentence("a", &["river", "bank", "flooded"])).unwrap();
        let b = enc.encode(&sentence("b", &["the", "bank", "lent"])).unwrap();
        assert!(cosine(&a.tokens[1], &b.tokens[1]) < 1.0 - 1e-6);
    }

    #[test]
    fn pooling_averages_pieces() {
        let s = sentence("s", &["un", "believable"]);
        let pieces = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![4.0, 4.0]];
        let pooled = pool_pieces(&s, &pieces, &[0, 1, 1]).unwrap();
        assert_eq!(pooled, vec![vec![1.0, 0.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn pooling_reports_unaligned_tokens() {
        let s = sentence("s7", &["a", "b"]);
        match pool_pieces(&s, &[vec![1.0]], &[0]) {
            Err(Error::Alignment { sentence, .. }) => assert_eq!(sentence, "s7"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(pool_pieces(&s, &[vec![1.0], vec![1.0]], &[0, 2]).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"sentence_id": "s", "pieces": [[1, 2], [3, 4], [5, 6]], "piece_to_token": [0, 0, 1], "summary": [9, 9, 9]}}"#
        )
        .unwrap();
        let cache = PieceCache::load(f.path()).unwrap();
        assert_eq!(cache.dimension(), 2);
        assert_eq!(cache.summary_dimension(), 3);
        let out = cache.encode(&sentence("s", &["x", "y"])).unwrap();
        assert_eq!(out.tokens, vec![vec![2.0, 3.0], vec![5.0, 6.0]]);
        assert!(cache.encode(&sentence("missing", &["x"])).is_err());
    }

    #[test]
    fn resolve_identifiers() {
        assert_eq!(resolve_contextual("toy:8").unwrap().dimension(), 8);
        assert!(matches!(resolve_contextual("bert-base"), Err(Error::Config(_))));
        assert!(matches!(
            resolve_contextual("cache:/nonexistent/file.jsonl"),
            Err(Error::Config(_))
        ));
    }
}
