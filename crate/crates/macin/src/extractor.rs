//! Turns a trained model's cross-attention into ranked claim-worthy
//! sentences and exportable attention matrices. Everything here runs the
//! model in eval mode and is read-only over the state.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ndtensor::Mode;

use crate::corpus::{Article, SentenceMatrix};
use crate::error::ModelError;
use crate::model::{forward, ForwardOutput, ModelState};

/// Ranked sentence ids with their headline-relevance scores. Scores are
/// non-increasing, ids unique and below the article's real sentence
/// count, and the list holds at most `k` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRanking {
    pub article_id: u64,
    pub ranked: Vec<RankedSentence>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSentence {
    pub sentence_id: usize,
    pub score: f64,
}

/// Attention matrices restricted to real sentences: the head-averaged
/// headline→sentence vector, the per-head rows behind it, and the
/// head-averaged sentence→sentence matrix.
#[derive(Debug, Clone, Serialize)]
pub struct AttentionExport {
    pub article_id: u64,
    pub headline_sentence: Vec<f64>,
    pub per_head: Vec<Vec<f64>>,
    pub sentence_sentence: Vec<Vec<f64>>,
}

/// Head-averaged headline attention over the real sentences, renormalized
/// to sum to one so scores are comparable across article lengths.
pub fn scores_from_output(output: &ForwardOutput) -> Vec<f64> {
    let n_real = output.n_real;
    let heads = output.cross_attention.len() as f64;
    let mut scores = vec![0.0; n_real];
    for head in &output.cross_attention {
        for (j, s) in scores.iter_mut().enumerate() {
            *s += head[j] / heads;
        }
    }
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        for s in &mut scores {
            *s /= total;
        }
    }
    scores
}

/// Eval-mode forward pass reduced to per-sentence scores.
pub fn score_sentences(
    state: &ModelState,
    matrix: &SentenceMatrix,
    headline: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (output, _) = forward(state, matrix, headline, None, Mode::Eval, &mut rng)?;
    Ok(scores_from_output(&output))
}

/// Sorts descending, breaking ties toward the lower sentence index, and
/// truncates to `min(k, n)`.
pub fn rank_top_k(article_id: u64, scores: &[f64], k: usize) -> ClaimRanking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(&b))
    });
    let ranked = order
        .into_iter()
        .take(k)
        .map(|sentence_id| RankedSentence {
            sentence_id,
            score: scores[sentence_id],
        })
        .collect();
    ClaimRanking {
        article_id,
        ranked,
        k,
    }
}

/// Builds the attention export from a forward output — the same maps the
/// forward pass returned, reshaped and restricted to real sentences, with
/// no recomputation.
pub fn attention_from_output(article_id: u64, output: &ForwardOutput) -> AttentionExport {
    let n_real = output.n_real;
    let n = output.sentence_capacity;
    let per_head: Vec<Vec<f64>> = output
        .cross_attention
        .iter()
        .map(|row| row[..n_real].to_vec())
        .collect();
    let headline_sentence = scores_from_output(output);
    let heads = output.self_attention.len() as f64;
    let mut sentence_sentence = vec![vec![0.0; n_real]; n_real];
    for head in &output.self_attention {
        for (r, row) in sentence_sentence.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell += head[r * n + c] / heads;
            }
        }
    }
    AttentionExport {
        article_id,
        headline_sentence,
        per_head,
        sentence_sentence,
    }
}

pub fn export_attention(
    state: &ModelState,
    matrix: &SentenceMatrix,
    headline: &[f64],
) -> Result<AttentionExport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (output, _) = forward(state, matrix, headline, None, Mode::Eval, &mut rng)?;
    Ok(attention_from_output(matrix.article_id, &output))
}

/// JSON document for one article's extraction: texts, scores, top-k ids,
/// and the sentence→sentence matrix, ready for heatmap plotting.
#[derive(Debug, Serialize)]
struct ArticleExportDoc<'a> {
    article_id: u64,
    headline: &'a str,
    sentences: &'a [String],
    scores: &'a [f64],
    top_k: Vec<usize>,
    self_attention: &'a [Vec<f64>],
}

pub fn write_attention_json(
    article: &Article,
    export: &AttentionExport,
    ranking: &ClaimRanking,
    path: impl AsRef<Path>,
) -> std::io::Result<()> {
    let doc = ArticleExportDoc {
        article_id: export.article_id,
        headline: &article.headline,
        sentences: &article.sentences,
        scores: &export.headline_sentence,
        top_k: ranking.ranked.iter().map(|r| r.sentence_id).collect(),
        self_attention: &export.sentence_sentence,
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?.as_bytes())
}

/// Two CSV files with sentence-id header rows: the headline→sentence
/// weights (mean row plus one row per head) and the sentence→sentence
/// matrix (leading id column).
pub fn write_attention_csv(
    export: &AttentionExport,
    headline_path: impl AsRef<Path>,
    sentences_path: impl AsRef<Path>,
) -> std::io::Result<()> {
    let n = export.headline_sentence.len();
    let header: Vec<String> = (0..n).map(|i| i.to_string()).collect();

    let mut f = std::fs::File::create(headline_path)?;
    writeln!(f, "row,{}", header.join(","))?;
    let mean_row: Vec<String> = export.headline_sentence.iter().map(|v| v.to_string()).collect();
    writeln!(f, "mean,{}", mean_row.join(","))?;
    for (h, row) in export.per_head.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "head_{h},{}", cells.join(","))?;
    }

    let mut f = std::fs::File::create(sentences_path)?;
    writeln!(f, "sentence_id,{}", header.join(","))?;
    for (r, row) in export.sentence_sentence.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{r},{}", cells.join(","))?;
    }
    Ok(())
}
