//! Precision/recall/F1 of extracted claims against gold annotations,
//! either by sentence id or by cosine similarity of sentence texts.

use serde::{Deserialize, Serialize};

use crate::corpus::{embed_sentence, tokenize, EmbeddingTable};
use crate::error::EvalError;
use crate::extractor::ClaimRanking;

/// Gold annotations for one article: sentence ids when the corpus aligns
/// ids with predictions, claim texts otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldClaims {
    pub article_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_texts: Option<Vec<String>>,
}

/// One article's predictions as consumed by evaluation: ranked ids plus
/// the corresponding sentence texts for cosine matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub article_id: u64,
    pub sentence_ids: Vec<usize>,
    #[serde(default)]
    pub texts: Vec<String>,
}

impl Prediction {
    pub fn from_ranking(ranking: &ClaimRanking, sentences: &[String]) -> Self {
        let ids: Vec<usize> = ranking.ranked.iter().map(|r| r.sentence_id).collect();
        let texts = ids.iter().map(|&i| sentences[i].clone()).collect();
        Prediction {
            article_id: ranking.article_id,
            sentence_ids: ids,
            texts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Ids,
    Cosine,
}

/// How per-article counts combine: pooled counts (micro) or an average of
/// per-article scores (macro).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Micro,
    PerArticleMacro,
}

/// Counts and ratios for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: MatchMode,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fne: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub skipped_articles: Vec<u64>,
}

/// Set-intersection counting over sentence ids.
pub fn match_by_ids(pred: &Prediction, gold: &GoldClaims) -> Result<(u64, u64, u64), EvalError> {
    if pred.article_id != gold.article_id {
        return Err(EvalError::ArticleMismatch {
            pred: pred.article_id,
            gold: gold.article_id,
        });
    }
    let gold_ids = gold.sentence_ids.as_deref().unwrap_or(&[]);
    let tp = pred
        .sentence_ids
        .iter()
        .filter(|id| gold_ids.contains(id))
        .count() as u64;
    let fp = pred.sentence_ids.len() as u64 - tp;
    let fne = gold_ids
        .iter()
        .filter(|id| !pred.sentence_ids.contains(id))
        .count() as u64;
    Ok((tp, fp, fne))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        // cosine with a zero vector is undefined; it never matches
        -1.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy one-to-one matching by mean-embedding cosine: predictions are
/// visited in rank order; each takes its best unconsumed gold claim when
/// the similarity clears the threshold, otherwise it is a false positive.
/// Unconsumed golds are false negatives.
pub fn match_by_cosine(
    pred_texts: &[String],
    gold_texts: &[String],
    table: &EmbeddingTable,
    threshold: f64,
) -> Result<(u64, u64, u64), EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let gold_vecs: Vec<Vec<f64>> = gold_texts
        .iter()
        .map(|t| embed_sentence(&tokenize(t), table))
        .collect();
    let mut consumed = vec![false; gold_vecs.len()];
    let mut tp = 0u64;
    let mut fp = 0u64;
    for text in pred_texts {
        let v = embed_sentence(&tokenize(text), table);
        let mut best: Option<(usize, f64)> = None;
        for (g, gv) in gold_vecs.iter().enumerate() {
            if consumed[g] {
                continue;
            }
            let sim = cosine(&v, gv);
            if best.map_or(true, |(_, b)| sim > b) {
                best = Some((g, sim));
            }
        }
        match best {
            Some((g, sim)) if sim >= threshold => {
                consumed[g] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    let fne = consumed.iter().filter(|&&c| !c).count() as u64;
    Ok((tp, fp, fne))
}

/// Precision, recall, and F1 with the zero-denominator → zero convention.
pub fn compute_prf(tp: u64, fp: u64, fne: u64) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fne == 0 {
        0.0
    } else {
        tp as f64 / (tp + fne) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Evaluates a prediction set against gold annotations. Predictions are
/// truncated to the top `k`; articles without gold are skipped and listed.
/// Micro aggregation pools counts before computing the ratios.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_dataset(
    predictions: &[Prediction],
    golds: &[GoldClaims],
    mode: MatchMode,
    threshold: f64,
    table: Option<&EmbeddingTable>,
    k: usize,
    aggregation: Aggregation,
) -> Result<EvalReport, EvalError> {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fne = 0u64;
    let mut skipped = Vec::new();
    let mut per_article = Vec::new();

    for pred in predictions {
        let Some(gold) = golds.iter().find(|g| g.article_id == pred.article_id) else {
            log::warn!("no gold annotations for article {}; skipping", pred.article_id);
            skipped.push(pred.article_id);
            continue;
        };
        let truncated = Prediction {
            article_id: pred.article_id,
            sentence_ids: pred.sentence_ids.iter().take(k).copied().collect(),
            texts: pred.texts.iter().take(k).cloned().collect(),
        };
        let counts = match mode {
            MatchMode::Ids => match_by_ids(&truncated, gold)?,
            MatchMode::Cosine => {
                let table = table.expect("cosine mode requires an embedding table");
                let gold_texts = gold.claim_texts.clone().unwrap_or_default();
                match_by_cosine(&truncated.texts, &gold_texts, table, threshold)?
            }
        };
        tp += counts.0;
        fp += counts.1;
        fne += counts.2;
        per_article.push(compute_prf(counts.0, counts.1, counts.2));
    }

    let (precision, recall, f1) = match aggregation {
        Aggregation::Micro => compute_prf(tp, fp, fne),
        Aggregation::PerArticleMacro => {
            let n = per_article.len().max(1) as f64;
            let p = per_article.iter().map(|x| x.0).sum::<f64>() / n;
            let r = per_article.iter().map(|x| x.1).sum::<f64>() / n;
            let f = per_article.iter().map(|x| x.2).sum::<f64>() / n;
            (p, r, f)
        }
    };
    Ok(EvalReport {
        mode,
        k,
        threshold: matches!(mode, MatchMode::Cosine).then_some(threshold),
        tp,
        fp,
        fne,
        precision,
        recall,
        f1,
        skipped_articles: skipped,
    })
}
