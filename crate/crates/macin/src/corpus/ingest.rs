use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::Article;
use crate::error::CorpusError;

/// Writes articles in the canonical interchange format: one JSON document
/// per line, `{id, headline, sentences, label, dataset}`.
pub fn write_canonical(articles: &[Article], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for article in articles {
        let line = serde_json::to_string(article).expect("article serializes");
        writeln!(file, "{line}").map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

pub fn read_canonical(path: impl AsRef<Path>) -> Result<Vec<Article>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        if !seen.insert(article.id) {
            return Err(CorpusError::DuplicateId { id: article.id });
        }
        articles.push(article);
    }
    Ok(articles)
}
