//! Text ingestion, tokenization, embeddings, vocabulary, and the
//! article-to-matrix step that feeds the model.

mod dnf;
mod embeddings;
mod folds;
mod ingest;
mod matrix;
mod tokenize;
mod vocab;

pub use dnf::{load_cdc, load_dnf, CdcArticle, DnfFlavor, DnfRecord, IngestReport};
pub use embeddings::{embed_sentence, load_embeddings, load_embeddings_with_dim, EmbeddingTable};
pub use folds::{split_folds, FoldPlan};
pub use ingest::{read_canonical, write_canonical};
pub use matrix::{build_article_matrix, SentenceMatrix};
pub use tokenize::{split_sentences, tokenize};
pub use vocab::{
    build_vocab, encode_headline_words, Vocabulary, DEFAULT_VOCAB_CAPACITY, EOS_ID, PAD_ID, UNK_ID,
};

use serde::{Deserialize, Serialize};

/// Which corpus an article came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Dnf700,
    Dnf300,
    Cdc,
}

/// Article label as it appears on disk: an integer veracity class for
/// DNF-300, a source class string for DNF-700.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Veracity(u8),
    Source(String),
}

/// One ingested article in the canonical interchange form: id, headline,
/// pre-split sentences, optional label, and source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: u64,
    pub headline: String,
    pub sentences: Vec<String>,
    pub label: Option<Label>,
    pub dataset: Dataset,
}
