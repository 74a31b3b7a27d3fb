use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences, Article, Dataset, Label};
use crate::error::CorpusError;

/// Which DNF corpus schema applies: DNF-700 labels articles by source
/// class, DNF-300 by a four-way veracity class with evidence and reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnfFlavor {
    Dnf700,
    Dnf300,
}

fn one_or_many<'de, D>(de: D) -> Result<Vec<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Option::<OneOrMany>::deserialize(de)? {
        None => Vec::new(),
        Some(OneOrMany::One(s)) if s.is_empty() => Vec::new(),
        Some(OneOrMany::One(s)) => vec![s],
        Some(OneOrMany::Many(v)) => v,
    })
}

/// One metadata record from a DNF JSON file. The article body lives in a
/// separate `article_<id>` text file.
#[derive(Debug, Clone, Deserialize)]
pub struct DnfRecord {
    pub id: u64,
    #[serde(default)]
    pub authors: String,
    pub headline: String,
    #[serde(rename = "type")]
    pub label: serde_json::Value,
    #[serde(default)]
    pub urls: String,
    #[serde(default, deserialize_with = "one_or_many")]
    pub evidence: Vec<String>,
    #[serde(default)]
    pub reason: Option<String>,
}

/// Validation summary produced by ingestion. The label histogram counts
/// every record whose label passed schema validation, independent of
/// whether its body file was found.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub loaded: usize,
    pub label_histogram: BTreeMap<String, usize>,
    pub bad_labels: Vec<u64>,
    pub missing_bodies: Vec<u64>,
    pub empty_bodies: Vec<u64>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn has_schema_violations(&self) -> bool {
        !self.bad_labels.is_empty()
    }
}

fn validate_label(record: &DnfRecord, flavor: DnfFlavor) -> Option<Label> {
    match flavor {
        DnfFlavor::Dnf700 => match record.label.as_str() {
            Some(s @ ("fake" | "questionable")) => Some(Label::Source(s.to_string())),
            _ => None,
        },
        DnfFlavor::Dnf300 => match record.label.as_u64() {
            Some(v @ 0..=3) => Some(Label::Veracity(v as u8)),
            _ => None,
        },
    }
}

fn label_key(label: &Label) -> String {
    match label {
        Label::Veracity(v) => v.to_string(),
        Label::Source(s) => s.clone(),
    }
}

/// Loads a DNF corpus: the JSON metadata array joined with per-article
/// body files named `article_<id>`. Bodies are split into sentences here,
/// once, so the canonical output is the only segmentation that exists.
pub fn load_dnf(
    json_path: impl AsRef<Path>,
    articles_dir: impl AsRef<Path>,
    flavor: DnfFlavor,
) -> Result<(Vec<Article>, IngestReport), CorpusError> {
    let json_path = json_path.as_ref();
    let raw = std::fs::read_to_string(json_path).map_err(|source| CorpusError::Io {
        path: json_path.to_path_buf(),
        source,
    })?;
    let records: Vec<DnfRecord> =
        serde_json::from_str(&raw).map_err(|source| CorpusError::Json {
            path: json_path.to_path_buf(),
            source,
        })?;

    let mut seen = HashSet::new();
    let mut report = IngestReport::default();
    let mut articles = Vec::new();
    let dataset = match flavor {
        DnfFlavor::Dnf700 => Dataset::Dnf700,
        DnfFlavor::Dnf300 => Dataset::Dnf300,
    };

    for record in records {
        if !seen.insert(record.id) {
            return Err(CorpusError::DuplicateId { id: record.id });
        }
        let label = match validate_label(&record, flavor) {
            Some(l) => l,
            None => {
                report.bad_labels.push(record.id);
                continue;
            }
        };
        *report.label_histogram.entry(label_key(&label)).or_insert(0) += 1;

        if flavor == DnfFlavor::Dnf300
            && record.evidence.is_empty()
            && label != Label::Veracity(0)
        {
            report.warnings.push(format!(
                "article {} has no evidence but label {}",
                record.id,
                label_key(&label)
            ));
        }

        let body_path = articles_dir.as_ref().join(format!("article_{}", record.id));
        let body = match std::fs::read_to_string(&body_path) {
            Ok(b) => b,
            Err(_) => {
                log::warn!("missing body file for article {}", record.id);
                report.missing_bodies.push(record.id);
                continue;
            }
        };
        let sentences = split_sentences(&body);
        if sentences.is_empty() {
            report.empty_bodies.push(record.id);
            continue;
        }
        report.loaded += 1;
        articles.push(Article {
            id: record.id,
            headline: record.headline,
            sentences,
            label: Some(label),
            dataset,
        });
    }
    Ok((articles, report))
}

/// CDC article: the topic statement plays the headline role and the
/// annotated claim sentences are kept as raw gold texts.
#[derive(Debug, Clone)]
pub struct CdcArticle {
    pub article: Article,
    pub gold_claims: Vec<String>,
}

impl CdcArticle {
    /// Articles with eight or more annotated claims form the evaluation set.
    pub fn eval_eligible(&self) -> bool {
        self.gold_claims.len() >= 8
    }

    pub fn training_only(&self) -> bool {
        self.gold_claims.is_empty()
    }
}

#[derive(Deserialize)]
struct CdcRaw {
    #[serde(default)]
    topic: String,
    #[serde(default)]
    sentences: Vec<String>,
    #[serde(default)]
    article: Option<String>,
    #[serde(default)]
    claims: Vec<String>,
}

/// Loads a CDC-style corpus: a JSON array of `{topic, sentences|article,
/// claims}` objects. Ids are assigned by position.
pub fn load_cdc(path: impl AsRef<Path>) -> Result<Vec<CdcArticle>, CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries: Vec<CdcRaw> = serde_json::from_str(&raw).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let id = i as u64;
        if entry.topic.trim().is_empty() {
            return Err(CorpusError::MissingHeadline { id });
        }
        let sentences = if !entry.sentences.is_empty() {
            entry.sentences
        } else {
            split_sentences(entry.article.as_deref().unwrap_or(""))
        };
        if sentences.is_empty() {
            return Err(CorpusError::EmptySentences { id });
        }
        out.push(CdcArticle {
            article: Article {
                id,
                headline: entry.topic,
                sentences,
                label: None,
                dataset: Dataset::Cdc,
            },
            gold_claims: entry.claims,
        });
    }
    Ok(out)
}
