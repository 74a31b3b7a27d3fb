use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::CorpusError;

pub const DEFAULT_EMBED_DIM: usize = 300;

/// Word → fixed-dimension vector map loaded from a text embedding file.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    skipped_lines: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            skipped_lines: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Malformed lines encountered while loading.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    /// Vector for a word; `None` when out of vocabulary — the caller
    /// decides the OOV policy.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) {
        debug_assert_eq!(vector.len(), self.dim);
        self.vectors.insert(word.into(), vector);
    }
}

/// Loads a `word v1 .. vD` per-line embedding file with the standard 300
/// dimensions. Lines with the wrong field count are counted and skipped.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, CorpusError> {
    load_embeddings_with_dim(path, DEFAULT_EMBED_DIM)
}

pub fn load_embeddings_with_dim(
    path: impl AsRef<Path>,
    dim: usize,
) -> Result<EmbeddingTable, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut table = EmbeddingTable::new(dim);
    for line in reader.lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut parts = line.split_whitespace();
        let word = match parts.next() {
            Some(w) => w,
            None => continue, // blank line
        };
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        match values {
            Ok(v) if v.len() == dim => {
                table.vectors.insert(word.to_string(), v);
            }
            _ => table.skipped_lines += 1,
        }
    }
    if table.vectors.is_empty() {
        return Err(CorpusError::EmptyEmbeddings {
            path: path.to_path_buf(),
        });
    }
    Ok(table)
}

/// Mean of the embeddings of the in-vocabulary tokens. A sentence whose
/// tokens are all out of vocabulary (or empty) maps to the zero vector.
pub fn embed_sentence(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let mut acc = vec![0.0; table.dim()];
    let mut hits = 0usize;
    for tok in tokens {
        if let Some(v) = table.lookup(tok) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            hits += 1;
        }
    }
    if hits > 0 {
        let inv = 1.0 / hits as f64;
        for a in &mut acc {
            *a *= inv;
        }
    }
    acc
}
