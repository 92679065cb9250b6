use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Context-free embedding table with lowercased keys. Unknown tokens map to the zero vector.
#[derive(Clone, Debug)]
pub struct StaticEmbeddings {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl StaticEmbeddings {
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        let mut table = StaticEmbeddings {
            dim,
            index: HashMap::with_capacity(entries.len()),
            data: Vec::with_capacity(entries.len() * dim),
        };
        for (word, vector) in entries {
            table.insert(word, &vector)?;
        }
        Ok(table)
    }

    fn insert(&mut self, word: String, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(format!(
                "embedding for {word:?} has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("embedding for {word:?} is not finite")));
        }
        let key = word.to_lowercase();
        if !self.index.contains_key(&key) {
            self.index.insert(key, self.index.len());
            self.data.extend_from_slice(vector);
        }
        Ok(())
    }

    /// Read `token v1 .. vd` lines. The dimension is taken from the first line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<StaticEmbeddings> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vector = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let t = table.get_or_insert_with(|| StaticEmbeddings {
                dim: vector.len(),
                index: HashMap::new(),
                data: Vec::new(),
            });
            t.insert(word.to_string(), &vector).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        match table {
            Some(t) if t.dim > 0 => Ok(t),
            _ => Err(Error::Data(format!("{}: no embeddings", path.display()))),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(&token.to_lowercase())
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.index.get(&token.to_lowercase()) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].to_vec(),
            None => vec![0.0; self.dim],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn load_and_lookup() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "cat 0.5 -1.0 2").unwrap();
        writeln!(f, "Bank 1 1 1").unwrap();
        writeln!(f, "bank 9 9 9").unwrap();
        let t = StaticEmbeddings::load(f.path()).unwrap();
        assert_eq!(t.dimension(), 3);
        assert_eq!(t.lookup("cat"), vec![0.5, -1.0, 2.0]);
        assert_eq!(t.lookup("CAT"), vec![0.5, -1.0, 2.0]);
        // first occurrence wins after lowercasing
        assert_eq!(t.lookup("bank"), vec![1.0, 1.0, 1.0]);
        assert_eq!(t.lookup("zzxqv"), vec![0.0; 3]);
    }

    #[test]
    fn ragged_file_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a 1 2").unwrap();
        writeln!(f, "b 1 2 3").unwrap();
        match StaticEmbeddings::load(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
