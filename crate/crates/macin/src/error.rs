use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("embedding file {path} contains no valid entries")]
    EmptyEmbeddings { path: PathBuf },
    #[error("duplicate article id {id}")]
    DuplicateId { id: u64 },
    #[error("article {id} has no sentences")]
    EmptySentences { id: u64 },
    #[error("article {id} has no topic/headline")]
    MissingHeadline { id: u64 },
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("cannot split {n} items into {k} folds")]
    TooFewItems { n: usize, k: usize },
    #[error("fold count {k} must be at least 2")]
    TooFewFolds { k: usize },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("filter count {filters} is not divisible by 8")]
    FiltersNotDivisible { filters: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("teacher sequence of {len} ids exceeds the {max}-word cap")]
    TeacherTooLong { len: usize, max: usize },
    #[error("variant {variant} does not produce {output}")]
    MissingVariantOutput {
        variant: &'static str,
        output: &'static str,
    },
    #[error(transparent)]
    Tensor(#[from] ndtensor::NdError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epochs must be at least 1")]
    NoEpochs,
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("training set is empty")]
    NoTrainingData,
    #[error("train and validation sets share article id {id}")]
    OverlappingSplit { id: u64 },
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("gradient failure at epoch {epoch}, batch {batch}: {source}")]
    BadGradient {
        epoch: usize,
        batch: usize,
        source: ndtensor::NdError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch: file is truncated or corrupt")]
    Checksum,
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("manifest entry {name} has shape {shape:?}, expected {expected:?}")]
    ManifestShape {
        name: String,
        shape: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("manifest is missing entry {name}")]
    ManifestMissing { name: String },
    #[error("payload holds {got} values, manifest declares {expected}")]
    PayloadLength { got: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction is for article {pred}, gold is for article {gold}")]
    ArticleMismatch { pred: u64, gold: u64 },
    #[error("negative count")]
    NegativeCount,
    #[error("similarity threshold {0} is outside (0, 1]")]
    BadThreshold(f64),
}
