//! The claim-identification network: a 1-d conv block over sentence
//! embeddings, multihead self-attention across sentences, headline
//! cross-attention, and one or two headline decoders depending on the
//! supervisory-signal variant.

mod forward;

pub mod checkpoint;

pub use forward::{forward, ArticlePass, BatchSample, ForwardOutput, LossVars, ModelGraph};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ndtensor::{BnStats, Tensor};

use crate::error::ModelError;

/// Supervisory-signal variant: regress the headline vector, generate the
/// headline words, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hv,
    Ohwv,
    Combined,
}

impl Variant {
    pub fn wants_headline_vector(self) -> bool {
        matches!(self, Variant::Hv | Variant::Combined)
    }

    pub fn wants_headline_words(self) -> bool {
        matches!(self, Variant::Ohwv | Variant::Combined)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Hv => "hv",
            Variant::Ohwv => "ohwv",
            Variant::Combined => "combined",
        };
        f.write_str(s)
    }
}

/// Model hyperparameters. The attention head width is pinned to an eighth
/// of the filter count, so `filters` must be divisible by 8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sentence/headline embedding width (D).
    pub embed_dim: usize,
    /// Fixed sentence capacity per article (L).
    pub max_sentences: usize,
    /// Convolution window in sentences (K).
    pub conv_width: usize,
    /// Convolution filter count (C).
    pub filters: usize,
    /// Attention head count (M).
    pub heads: usize,
    /// Total word-id space of the decoder, reserved ids included.
    pub vocab_total: usize,
    /// Headline generation cap in words, EOS included.
    pub max_headline_words: usize,
    pub variant: Variant,
    pub dropout: f64,
    /// Recurrent decoder state width.
    pub decoder_hidden: usize,
    /// Learned decoder input embedding width.
    pub decoder_embed: usize,
    /// Exclude padded sentence positions from attention softmax. On by
    /// default; turning it off reproduces the unmasked formulation.
    pub mask_attention: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            max_sentences: 500,
            conv_width: 4,
            filters: 64,
            heads: 4,
            vocab_total: 20_003,
            max_headline_words: 50,
            variant: Variant::Combined,
            dropout: 0.5,
            decoder_hidden: 256,
            decoder_embed: 128,
            mask_attention: true,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ModelConfig {
    /// Per-head channel width (C/8).
    pub fn head_dim(&self) -> usize {
        self.filters / 8
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.filters % 8 != 0 || self.filters == 0 {
            return Err(ModelError::FiltersNotDivisible { filters: self.filters });
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("max_sentences", self.max_sentences),
            ("conv_width", self.conv_width),
            ("heads", self.heads),
            ("vocab_total", self.vocab_total),
            ("max_headline_words", self.max_headline_words),
            ("decoder_hidden", self.decoder_hidden),
            ("decoder_embed", self.decoder_embed),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.conv_width > self.max_sentences {
            return Err(ModelError::InvalidConfig(format!(
                "conv_width {} exceeds max_sentences {}",
                self.conv_width, self.max_sentences
            )));
        }
        Ok(())
    }
}

/// All learnable parameters of one model plus the batch-norm running
/// statistics. Parameters are stored under stable names in a canonical
/// order that is a pure function of the config.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub seed: u64,
    params: IndexMap<String, Tensor>,
    pub bn_running: BnStats,
}

impl ModelState {
    pub fn param(&self, name: &str) -> &Tensor {
        &self.params[name]
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Tensor {
        self.params.get_mut(name).expect("known parameter name")
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }
}

/// Canonical parameter inventory for a config: `(name, shape)` pairs in
/// initialization/checkpoint order.
pub fn parameter_manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.embed_dim;
    let c = config.filters;
    let cb = config.head_dim();
    let k = config.conv_width;
    let m = config.heads;
    let mc = m * c;
    let mut out = vec![
        ("conv.kernel".to_string(), vec![k, d, c]),
        ("conv.bias".to_string(), vec![c]),
        ("bn.scale".to_string(), vec![c]),
        ("bn.shift".to_string(), vec![c]),
    ];
    for i in 0..m {
        out.push((format!("self.{i}.query"), vec![cb, c]));
        out.push((format!("self.{i}.key"), vec![cb, c]));
        out.push((format!("self.{i}.value"), vec![cb, c]));
        out.push((format!("self.{i}.out"), vec![c, cb]));
        out.push((format!("self.{i}.input_scale"), vec![1]));
        out.push((format!("self.{i}.context_scale"), vec![1]));
    }
    for i in 0..m {
        out.push((format!("cross.{i}.headline"), vec![cb, d]));
        out.push((format!("cross.{i}.key"), vec![cb, mc]));
        out.push((format!("cross.{i}.value"), vec![cb, mc]));
        out.push((format!("cross.{i}.out"), vec![c, cb]));
        out.push((format!("cross.{i}.input_scale"), vec![1]));
        out.push((format!("cross.{i}.context_scale"), vec![1]));
    }
    if config.variant.wants_headline_vector() {
        out.push(("hv.weight".to_string(), vec![d, mc]));
        out.push(("hv.bias".to_string(), vec![d, 1]));
    }
    if config.variant.wants_headline_words() {
        let h = config.decoder_hidden;
        let e = config.decoder_embed;
        let v = config.vocab_total;
        out.push(("ohwv.embed".to_string(), vec![v, e]));
        out.push(("ohwv.start".to_string(), vec![e, 1]));
        out.push(("ohwv.init_weight".to_string(), vec![h, mc]));
        out.push(("ohwv.init_bias".to_string(), vec![h, 1]));
        out.push(("ohwv.gate_input".to_string(), vec![4 * h, e]));
        out.push(("ohwv.gate_hidden".to_string(), vec![4 * h, h]));
        out.push(("ohwv.gate_bias".to_string(), vec![4 * h, 1]));
        out.push(("ohwv.proj_weight".to_string(), vec![v, h]));
        out.push(("ohwv.proj_bias".to_string(), vec![v, 1]));
    }
    out
}

fn fan_pair(name: &str, shape: &[usize]) -> (usize, usize) {
    if name == "conv.kernel" {
        // receptive-field scaling: K·D in, K·C out
        (shape[0] * shape[1], shape[0] * shape[2])
    } else if shape.len() == 2 {
        (shape[1], shape[0])
    } else {
        let n: usize = shape.iter().product();
        (n, n)
    }
}

/// Initializes a model deterministically from a seed. Weight matrices draw
/// from the symmetric uniform range `±sqrt(6/(fan_in+fan_out))`, biases
/// start at zero, and every attention head starts as an exact identity:
/// input scale 1, context scale 0.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelState, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = IndexMap::new();
    for (name, shape) in parameter_manifest(config) {
        let n: usize = shape.iter().product();
        let tensor = if name.ends_with(".input_scale") || name == "bn.scale" {
            Tensor::new(shape, vec![1.0; n]).expect("init shape")
        } else if name.ends_with(".context_scale")
            || name.ends_with("bias")
            || name == "bn.shift"
        {
            Tensor::zeros(shape)
        } else {
            let (fan_in, fan_out) = fan_pair(&name, &shape);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..n)
                .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
                .collect();
            Tensor::new(shape, data).expect("init shape")
        };
        params.insert(name, tensor);
    }
    Ok(ModelState {
        config: config.clone(),
        seed,
        params,
        bn_running: BnStats::fresh(config.filters),
    })
}
