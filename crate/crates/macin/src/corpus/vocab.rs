use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Article};
use crate::error::CorpusError;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const EOS_ID: usize = 2;
const RESERVED: usize = 3;

pub const DEFAULT_VOCAB_CAPACITY: usize = 20_000;

/// Frequency-ranked word→id map. Ids are dense: 0..3 are reserved for
/// PAD/UNK/EOS and corpus words start at 3 in rank order (ties broken
/// lexicographically), so the assignment is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_ranked(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), RESERVED + i))
            .collect();
        Vocabulary { words, index }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), RESERVED + i))
            .collect();
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        id.checked_sub(RESERVED).and_then(|i| self.words.get(i)).map(|s| s.as_str())
    }

    /// Number of corpus words (reserved ids excluded).
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Total id space: corpus words plus the three reserved ids.
    pub fn total_ids(&self) -> usize {
        self.words.len() + RESERVED
    }
}

/// Builds the top-`capacity` vocabulary from the headlines and bodies of
/// the given (training-fold) articles.
pub fn build_vocab(articles: &[Article], capacity: usize) -> Result<Vocabulary, CorpusError> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for article in articles {
        for tok in tokenize(&article.headline) {
            *counts.entry(tok).or_insert(0) += 1;
        }
        for sentence in &article.sentences {
            for tok in tokenize(sentence) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(capacity);
    Ok(Vocabulary::from_ranked(ranked.into_iter().map(|(w, _)| w).collect()))
}

/// Headline as a word-id sequence: OOV tokens map to UNK, the list is
/// truncated to `max_words - 1` tokens, and EOS is appended. The result
/// never exceeds `max_words` ids and always ends with EOS.
pub fn encode_headline_words(headline: &str, vocab: &Vocabulary, max_words: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokenize(headline)
        .iter()
        .take(max_words.saturating_sub(1))
        .map(|tok| vocab.word_id(tok).unwrap_or(UNK_ID))
        .collect();
    ids.push(EOS_ID);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, Label};

    fn article(id: u64, headline: &str, body: &[&str]) -> Article {
        Article {
            id,
            headline: headline.to_string(),
            sentences: body.iter().map(|s| s.to_string()).collect(),
            label: Some(Label::Veracity(0)),
            dataset: Dataset::Dnf300,
        }
    }

    #[test]
    fn small_corpus_keeps_all_words() {
        let arts = vec![article(0, "one two", &["three four five"])];
        let vocab = build_vocab(&arts, DEFAULT_VOCAB_CAPACITY).unwrap();
        assert_eq!(vocab.word_count(), 5);
        assert_eq!(vocab.total_ids(), 8);
    }

    #[test]
    fn equal_frequency_ties_break_lexicographically() {
        let arts = vec![article(0, "beta alpha", &["beta alpha"])];
        let vocab = build_vocab(&arts, DEFAULT_VOCAB_CAPACITY).unwrap();
        assert!(vocab.word_id("alpha").unwrap() < vocab.word_id("beta").unwrap());
        assert_eq!(vocab.word_id("alpha").unwrap(), 3);
    }

    #[test]
    fn vocabulary_is_deterministic() {
        let arts = vec![
            article(0, "shared words here", &["more shared words", "and some extras"]),
            article(1, "different headline", &["shared again"]),
        ];
        let v1 = build_vocab(&arts, DEFAULT_VOCAB_CAPACITY).unwrap();
        let v2 = build_vocab(&arts, DEFAULT_VOCAB_CAPACITY).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn capacity_truncates_by_rank() {
        let arts = vec![article(0, "a a a b b c", &["d"])];
        let vocab = build_vocab(&arts, 2).unwrap();
        assert_eq!(vocab.word_count(), 2);
        assert_eq!(vocab.word_id("a"), Some(3));
        assert_eq!(vocab.word_id("b"), Some(4));
        assert_eq!(vocab.word_id("c"), None);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let arts = vec![article(0, "...", &["!!"])];
        assert!(matches!(
            build_vocab(&arts, 10),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn short_headline_gets_eos_appended() {
        let arts = vec![article(0, "one two three", &["one two three"])];
        let vocab = build_vocab(&arts, 100).unwrap();
        let ids = encode_headline_words("one two three", &vocab, 50);
        assert_eq!(ids.len(), 4);
        assert_eq!(*ids.last().unwrap(), EOS_ID);
        assert!(ids[..3].iter().all(|&id| id >= 3));
    }

    #[test]
    fn long_headline_truncates_to_cap_with_eos_last() {
        let arts = vec![article(0, "w", &["w"])];
        let vocab = build_vocab(&arts, 100).unwrap();
        let long: String = vec!["w"; 60].join(" ");
        let ids = encode_headline_words(&long, &vocab, 50);
        assert_eq!(ids.len(), 50);
        assert_eq!(*ids.last().unwrap(), EOS_ID);
    }

    #[test]
    fn oov_headline_maps_to_unk() {
        let arts = vec![article(0, "known", &["known"])];
        let vocab = build_vocab(&arts, 100).unwrap();
        let ids = encode_headline_words("totally novel words", &vocab, 50);
        assert_eq!(ids, vec![UNK_ID, UNK_ID, UNK_ID, EOS_ID]);
    }
}
