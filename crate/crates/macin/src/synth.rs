//! Synthetic planted-headline corpus: every article contains exactly one
//! sentence whose embedding is the headline embedding plus small noise,
//! the rest are random filler. The planted index is the known ground
//! truth for end-to-end recovery checks.
//!
//! Structural choices that keep recovery honest at this scale: topics
//! are mutually orthogonal directions shared across articles, every
//! article carries distractor sentences made of other topic words (so the
//! pooled sentence mix never identifies the headline by itself), filler
//! words live in the opposite half of the embedding space, and filler
//! sentences are sampled fresh per article so no stable non-planted
//! landmark exists for attention to latch onto. With orthogonal topics a
//! soft attention mixture cannot imitate the headline vector: mass on any
//! non-matching topic adds irreducible error, so concentrating on the
//! planted sentence is the unique low-loss behavior.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Article, Dataset, EmbeddingTable};
use crate::evalkit::GoldClaims;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_articles: usize,
    pub sentences_per_article: usize,
    pub embed_dim: usize,
    /// Noise amplitude on the planted sentence's embedding.
    pub noise: f64,
    /// Shared pool of mutually orthogonal topic directions that headlines
    /// are drawn from.
    pub topic_words: usize,
    /// Upper bound on per-article topic-subspace decoys: sentences made
    /// of other topic words. The count varies per article (1..=max), so
    /// no fixed linear combination of pooled content can cancel them; the
    /// planted sentence must be singled out by the headline query.
    pub distractors_per_article: usize,
    pub filler_words: usize,
    pub filler_per_sentence: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_articles: 40,
            sentences_per_article: 10,
            embed_dim: 16,
            noise: 0.02,
            topic_words: 8,
            distractors_per_article: 3,
            filler_words: 120,
            filler_per_sentence: 2,
            seed: 7,
        }
    }
}

/// Number of topic directions the half-space can actually hold.
pub fn effective_topics(config: &SynthConfig) -> usize {
    config.topic_words.min((config.embed_dim - config.embed_dim / 2).max(1))
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub articles: Vec<Article>,
    pub gold: Vec<GoldClaims>,
    pub table: EmbeddingTable,
    /// Planted sentence index per article, parallel to `articles`.
    pub planted: Vec<usize>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Unit vector supported on one half of the embedding axes.
fn half_space_vector(rng: &mut ChaCha8Rng, dim: usize, upper: bool) -> Vec<f64> {
    let half = dim / 2;
    let width = dim - half;
    let active = unit_vector(rng, width);
    let mut v = vec![0.0; dim];
    let offset = if upper { half } else { 0 };
    for (i, &x) in active.iter().enumerate() {
        v[offset + i] = x;
    }
    v
}

/// Random orthonormal set in the lower half of the embedding space,
/// built by Gram-Schmidt over random unit vectors.
fn orthonormal_topics(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = half_space_vector(rng, dim, false);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in &mut v {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

/// Generates the corpus and its embedding table. Each article's headline
/// is a distinct combination of topic-pool words; its planted sentence is
/// the single word `echo<i>` whose vector is the headline's embedding
/// plus noise.
pub fn generate(config: &SynthConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.embed_dim;
    let mut table = EmbeddingTable::new(dim);

    let topic_vectors = orthonormal_topics(&mut rng, dim, effective_topics(config));
    let topics: Vec<(String, Vec<f64>)> = topic_vectors
        .into_iter()
        .enumerate()
        .map(|(t, vec)| {
            let word = format!("topic{t:02}");
            table.insert(word.clone(), vec.clone());
            (word, vec)
        })
        .collect();

    let filler: Vec<String> = (0..config.filler_words)
        .map(|w| {
            let word = format!("w{w:03}");
            table.insert(word.clone(), half_space_vector(&mut rng, dim, true));
            word
        })
        .collect();


    let mut articles = Vec::with_capacity(config.n_articles);
    let mut gold = Vec::with_capacity(config.n_articles);
    let mut planted = Vec::with_capacity(config.n_articles);
    for i in 0..config.n_articles {
        let pick = rng.random_range(0..topics.len());
        let headline_text = topics[pick].0.clone();
        let headline_vec = topics[pick].1.clone();
        let echo_word = format!("echo{i:03}");
        let echo_vec: Vec<f64> = headline_vec
            .iter()
            .map(|&x| x + config.noise * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        table.insert(echo_word.clone(), echo_vec);

        // lay out the planted sentence, the topic-subspace distractors,
        // and fresh filler sentences at shuffled positions
        let n = config.sentences_per_article;
        let mut slots: Vec<usize> = (0..n).collect();
        for s in (1..slots.len()).rev() {
            let j = rng.random_range(0..=s);
            slots.swap(s, j);
        }
        let planted_at = slots[0];
        let max_distractors = config.distractors_per_article.min(n - 1);
        let n_distractors = if max_distractors <= 1 {
            max_distractors
        } else {
            1 + rng.random_range(0..max_distractors)
        };
        let distractor_slots: Vec<usize> = slots[1..1 + n_distractors].to_vec();
        let sentences: Vec<String> = (0..n)
            .map(|s| {
                if s == planted_at {
                    format!("{echo_word}.")
                } else if distractor_slots.contains(&s) {
                    // a different topic than the headline's
                    loop {
                        let t = rng.random_range(0..topics.len());
                        if t != pick {
                            break format!("{}.", topics[t].0);
                        }
                    }
                } else {
                    let words: Vec<&str> = (0..config.filler_per_sentence)
                        .map(|_| filler[rng.random_range(0..filler.len())].as_str())
                        .collect();
                    format!("{}.", words.join(" "))
                }
            })
            .collect();

        articles.push(Article {
            id: i as u64,
            headline: headline_text,
            sentences,
            label: None,
            dataset: Dataset::Cdc,
        });
        gold.push(GoldClaims {
            article_id: i as u64,
            sentence_ids: Some(vec![planted_at]),
            claim_texts: None,
        });
        planted.push(planted_at);
    }

    SyntheticCorpus {
        articles,
        gold,
        table,
        planted,
    }
}

/// Writes the table in the standard text embedding format, one word and
/// its vector per line, sorted by word for reproducible bytes.
pub fn write_embeddings(
    corpus: &SyntheticCorpus,
    config: &SynthConfig,
    path: impl AsRef<Path>,
) -> std::io::Result<()> {
    let mut words: Vec<String> = (0..config.filler_words).map(|w| format!("w{w:03}")).collect();
    for t in 0..effective_topics(config) {
        words.push(format!("topic{t:02}"));
    }
    for i in 0..config.n_articles {
        words.push(format!("echo{i:03}"));
    }
    words.sort();
    let mut file = std::fs::File::create(path)?;
    for word in words {
        let vec = corpus.table.lookup(&word).expect("generated word");
        let cells: Vec<String> = vec.iter().map(|v| format!("{v:.17}")).collect();
        writeln!(file, "{word} {}", cells.join(" "))?;
    }
    Ok(())
}
