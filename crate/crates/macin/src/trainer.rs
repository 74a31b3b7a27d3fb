//! Self-supervised training: mini-batch gradient descent on the variant
//! loss with k-fold cross-validation, per-epoch logs, and deterministic
//! seeding throughout. Validation articles are only ever run in eval mode
//! on forward-only tapes, so they cannot contribute gradients.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ndtensor::{adam_step, AdamParams, AdamState, Mode};

use crate::corpus::{
    build_article_matrix, build_vocab, embed_sentence, encode_headline_words, split_folds,
    tokenize, Article, EmbeddingTable, SentenceMatrix, Vocabulary,
};
use crate::error::{CorpusError, TrainError};
use crate::model::{init_model, ModelConfig, ModelGraph, ModelState};

/// Training hyperparameters. The optimizer defaults are the ones the
/// model is specified with: lr 1e-4, β1 0.99, β2 0.0. No weight decay,
/// no early stopping; training always runs the full epoch budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub vocab_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamParams::default();
        TrainConfig {
            epochs: 2000,
            batch_size: 8,
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.eps,
            seed: 0,
            vocab_capacity: crate::corpus::DEFAULT_VOCAB_CAPACITY,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }
}

/// Mean losses for one epoch; the word/vector components are absent for
/// variants that do not produce them, and the validation columns are
/// absent when the validation set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_total: f64,
    pub train_vector: Option<f64>,
    pub train_words: Option<f64>,
    pub val_total: Option<f64>,
    pub val_vector: Option<f64>,
    pub val_words: Option<f64>,
}

/// Per-fold training record: config snapshot plus one entry per epoch.
/// Wall-clock time is kept out of the serialized form so identical runs
/// produce byte-identical logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    #[serde(skip)]
    pub wall_secs: f64,
}

/// A trained fold: the final state, the fold's vocabulary, its log, and
/// the ids of the articles it held out for validation.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub state: ModelState,
    pub vocab: Vocabulary,
    pub log: TrainingLog,
    pub val_ids: Vec<u64>,
}

/// One article prepared for the model: embedded matrix, embedded
/// headline, and the teacher word-id sequence under the fold vocabulary.
pub struct TrainSample {
    pub article_id: u64,
    pub matrix: SentenceMatrix,
    pub headline: Vec<f64>,
    pub teacher: Vec<usize>,
}

pub fn prepare_sample(
    article: &Article,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    config: &ModelConfig,
) -> Result<TrainSample, CorpusError> {
    let matrix = build_article_matrix(article, table, config.max_sentences)?;
    let headline = embed_sentence(&tokenize(&article.headline), table);
    let teacher = encode_headline_words(&article.headline, vocab, config.max_headline_words);
    Ok(TrainSample {
        article_id: article.id,
        matrix,
        headline,
        teacher,
    })
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0xcbf29ce484222325u64;
    for &p in parts {
        acc = splitmix(acc ^ p);
    }
    acc
}

struct EpochAccumulator {
    total: f64,
    vector: f64,
    words: f64,
    has_vector: bool,
    has_words: bool,
    count: usize,
}

impl EpochAccumulator {
    fn new() -> Self {
        EpochAccumulator {
            total: 0.0,
            vector: 0.0,
            words: 0.0,
            has_vector: false,
            has_words: false,
            count: 0,
        }
    }

    fn push(&mut self, total: f64, vector: Option<f64>, words: Option<f64>) {
        self.total += total;
        if let Some(v) = vector {
            self.vector += v;
            self.has_vector = true;
        }
        if let Some(w) = words {
            self.words += w;
            self.has_words = true;
        }
        self.count += 1;
    }

    fn mean(&self) -> (f64, Option<f64>, Option<f64>) {
        let n = self.count.max(1) as f64;
        (
            self.total / n,
            self.has_vector.then_some(self.vector / n),
            self.has_words.then_some(self.words / n),
        )
    }
}

/// Runs the per-sample forward+loss for one batch and returns the batch
/// loss variable plus the per-sample component values.
fn run_batch<'s>(
    state: &'s ModelState,
    samples: &[&TrainSample],
    mode: Mode,
    dropout_seed: u64,
    acc: &mut EpochAccumulator,
) -> Result<(ModelGraph<'s>, ndtensor::Var), TrainError> {
    let mut graph = ModelGraph::new(state, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let inputs: Vec<crate::model::BatchSample> = samples
        .iter()
        .map(|s| crate::model::BatchSample {
            matrix: &s.matrix,
            headline: &s.headline,
            teacher: Some(&s.teacher),
        })
        .collect();
    let passes = graph.forward_batch(&inputs, &mut rng)?;
    let mut total: Option<ndtensor::Var> = None;
    for pass in &passes {
        let loss = graph.loss(pass).map_err(TrainError::Model)?;
        let t = graph.tape.value(loss.total).map_err(ModelError_from)?.data()[0];
        let v = match loss.headline_vector {
            Some(var) => Some(graph.tape.value(var).map_err(ModelError_from)?.data()[0]),
            None => None,
        };
        let w = match loss.headline_words {
            Some(var) => Some(graph.tape.value(var).map_err(ModelError_from)?.data()[0]),
            None => None,
        };
        acc.push(t, v, w);
        total = Some(match total {
            Some(prev) => graph.tape.add(prev, loss.total).map_err(ModelError_from)?,
            None => loss.total,
        });
    }
    let summed = total.expect("non-empty batch");
    let mean = graph
        .tape
        .scale_const(summed, 1.0 / samples.len() as f64)
        .map_err(ModelError_from)?;
    Ok((graph, mean))
}

#[allow(non_snake_case)]
fn ModelError_from(e: ndtensor::NdError) -> TrainError {
    TrainError::Model(crate::error::ModelError::Tensor(e))
}

/// Trains one fold. The vocabulary is built from the training articles
/// only, validation loss is recorded each epoch but never acted on, and
/// the whole trajectory is a pure function of (data, config, seed).
pub fn train_fold(
    train_articles: &[Article],
    val_articles: &[Article],
    table: &EmbeddingTable,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<FoldResult, TrainError> {
    if train_config.epochs == 0 {
        return Err(TrainError::NoEpochs);
    }
    if train_config.batch_size == 0 {
        return Err(TrainError::EmptyBatch);
    }
    if train_articles.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    for t in train_articles {
        if val_articles.iter().any(|v| v.id == t.id) {
            return Err(TrainError::OverlappingSplit { id: t.id });
        }
    }

    let started = std::time::Instant::now();
    let vocab = build_vocab(train_articles, train_config.vocab_capacity)?;
    let mut config = model_config.clone();
    config.vocab_total = vocab.total_ids();

    let train_samples: Vec<TrainSample> = train_articles
        .iter()
        .map(|a| prepare_sample(a, table, &vocab, &config))
        .collect::<Result<_, _>>()?;
    let val_samples: Vec<TrainSample> = val_articles
        .iter()
        .map(|a| prepare_sample(a, table, &vocab, &config))
        .collect::<Result<_, _>>()?;

    let mut state = init_model(&config, train_config.seed)?;
    let adam = train_config.adam();
    let mut optimizer: IndexMap<String, AdamState> = state
        .params()
        .map(|(name, tensor)| (name.to_string(), AdamState::new(tensor.numel())))
        .collect();

    let mut log = TrainingLog {
        seed: train_config.seed,
        model_config: config.clone(),
        train_config: train_config.clone(),
        epochs: Vec::with_capacity(train_config.epochs),
        wall_secs: 0.0,
    };

    for epoch in 0..train_config.epochs {
        // deterministic per-epoch shuffle
        let mut order: Vec<usize> = (0..train_samples.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(mix(&[train_config.seed, 0x5f, epoch as u64]));
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut train_acc = EpochAccumulator::new();
        for (batch_idx, chunk) in order.chunks(train_config.batch_size).enumerate() {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &train_samples[i]).collect();
            let dropout_seed = mix(&[train_config.seed, 1, epoch as u64, batch_idx as u64]);
            let (mut graph, mean_loss) =
                run_batch(&state, &batch, Mode::Train, dropout_seed, &mut train_acc)?;
            let loss_value = graph.tape.value(mean_loss).map_err(ModelError_from)?.data()[0];
            if !loss_value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    value: loss_value,
                });
            }
            graph.tape.backward(mean_loss).map_err(ModelError_from)?;
            let grads = graph.param_grads()?;
            let bn = graph.bn_stats().clone();
            drop(graph);
            state.bn_running = bn;
            for (name, grad) in &grads {
                adam_step(
                    state.param_mut(name).data_mut(),
                    grad,
                    optimizer.get_mut(name).expect("optimizer slot"),
                    &adam,
                )
                .map_err(|source| TrainError::BadGradient {
                    epoch,
                    batch: batch_idx,
                    source,
                })?;
            }
        }

        let mut val_acc = EpochAccumulator::new();
        for chunk in val_samples.chunks(train_config.batch_size.max(1)) {
            if chunk.is_empty() {
                continue;
            }
            let batch: Vec<&TrainSample> = chunk.iter().collect();
            // eval mode, forward only: no backward call ever sees these
            let (_graph, _loss) = run_batch(&state, &batch, Mode::Eval, 0, &mut val_acc)?;
        }

        let (train_total, train_vector, train_words) = train_acc.mean();
        let val = (val_acc.count > 0).then(|| val_acc.mean());
        log.epochs.push(EpochStats {
            epoch,
            train_total,
            train_vector,
            train_words,
            val_total: val.map(|v| v.0),
            val_vector: val.and_then(|v| v.1),
            val_words: val.and_then(|v| v.2),
        });
    }

    log.wall_secs = started.elapsed().as_secs_f64();
    Ok(FoldResult {
        state,
        vocab,
        log,
        val_ids: val_articles.iter().map(|a| a.id).collect(),
    })
}

/// k-fold cross-validation over one article set: fold `i` is held out as
/// validation while the rest train. Fold membership comes from
/// `split_folds` with the training seed; each fold trains with its own
/// derived seed.
pub fn cross_validate(
    articles: &[Article],
    table: &EmbeddingTable,
    k: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<Vec<FoldResult>, TrainError> {
    if k < 2 {
        return Err(TrainError::Corpus(CorpusError::TooFewFolds { k }));
    }
    let plan = split_folds(articles.len(), k, train_config.seed)?;
    let mut results = Vec::with_capacity(k);
    for fold in 0..k {
        let (train_idx, val_idx) = plan.split(fold);
        let train: Vec<Article> = train_idx.iter().map(|&i| articles[i].clone()).collect();
        let val: Vec<Article> = val_idx.iter().map(|&i| articles[i].clone()).collect();
        let mut fold_config = train_config.clone();
        fold_config.seed = mix(&[train_config.seed, 0xf01d, fold as u64]);
        results.push(train_fold(&train, &val, table, model_config, &fold_config)?);
    }
    Ok(results)
}

/// Writes a training log as line-delimited JSON: a header line with the
/// config snapshot, then one line per epoch.
pub fn write_log_jsonl(log: &TrainingLog, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    let header = serde_json::json!({
        "seed": log.seed,
        "model_config": log.model_config,
        "train_config": log.train_config,
    });
    writeln!(file, "{header}")?;
    for epoch in &log.epochs {
        writeln!(file, "{}", serde_json::to_string(epoch).expect("epoch serializes"))?;
    }
    Ok(())
}
