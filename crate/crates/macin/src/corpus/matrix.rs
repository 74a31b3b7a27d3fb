use crate::corpus::{embed_sentence, tokenize, Article, EmbeddingTable};
use crate::error::CorpusError;

/// An article embedded as an `L×D` row-major matrix: the first `n_real`
/// rows are sentence embeddings in order, the rest are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    pub article_id: u64,
    /// Row-major `[rows × dim]` values.
    pub values: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
    pub n_real: usize,
    /// True exactly for the first `n_real` rows.
    pub mask: Vec<bool>,
}

impl SentenceMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }
}


/// Embeds each sentence and zero-pads up to `max_rows`. Articles with more
/// sentences than `max_rows` are truncated to the first `max_rows` with a
/// logged warning; an article with zero sentences is an error.
pub fn build_article_matrix(
    article: &Article,
    table: &EmbeddingTable,
    max_rows: usize,
) -> Result<SentenceMatrix, CorpusError> {
    if article.sentences.is_empty() {
        return Err(CorpusError::EmptySentences { id: article.id });
    }
    if article.sentences.len() > max_rows {
        log::warn!(
            "article {} has {} sentences; truncating to {}",
            article.id,
            article.sentences.len(),
            max_rows
        );
    }
    let n_real = article.sentences.len().min(max_rows);
    let dim = table.dim();
    let mut values = vec![0.0; max_rows * dim];
    for (r, sentence) in article.sentences.iter().take(n_real).enumerate() {
        let v = embed_sentence(&tokenize(sentence), table);
        values[r * dim..(r + 1) * dim].copy_from_slice(&v);
    }
    let mut mask = vec![false; max_rows];
    mask[..n_real].fill(true);
    Ok(SentenceMatrix {
        article_id: article.id,
        values,
        rows: max_rows,
        dim,
        n_real,
        mask,
    })
}
