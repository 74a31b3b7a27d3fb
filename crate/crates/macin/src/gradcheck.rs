//! Full-model gradient verification: analytic gradients from the tape
//! against central finite differences of the loss, per parameter, for all
//! three supervisory-signal variants.
//!
//! The probe state is jittered away from initialization (the context
//! scales start at exactly zero, which would leave the attention weights
//! with no gradient to check), and probe seeds are screened so no relu
//! input sits within the finite-difference step of its kink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ndtensor::gradcheck::{central_diff, max_rel_err};
use ndtensor::Mode;

use crate::corpus::SentenceMatrix;
use crate::error::ModelError;
use crate::model::{init_model, ModelConfig, ModelGraph, ModelState, Variant};

pub const FD_STEP: f64 = 1e-5;
pub const FULL_MODEL_TOLERANCE: f64 = 1e-3;
/// Finite differences over every parameter stay tractable only at toy
/// scale; larger articles are rejected.
pub const MAX_FD_SENTENCES: usize = 8;

/// Worst relative error per named parameter.
#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_err: f64,
}

/// Result of checking one variant.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub variant: Variant,
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub worst: String,
    pub passed: bool,
}

/// The sanctioned toy dimensions for full-model finite differences.
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        max_sentences: 6,
        conv_width: 4,
        filters: 16,
        heads: 2,
        vocab_total: 13,
        max_headline_words: 6,
        variant,
        dropout: 0.0,
        decoder_hidden: 8,
        decoder_embed: 8,
        ..ModelConfig::default()
    }
}

fn jitter(state: &mut ModelState, rng: &mut ChaCha8Rng, amount: f64) {
    for name in state.param_names() {
        for v in state.param_mut(&name).data_mut() {
            *v += amount * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
}

struct Probe {
    state: ModelState,
    matrix: SentenceMatrix,
    headline: Vec<f64>,
    teacher: Option<Vec<usize>>,
}

fn build_probe(cfg: &ModelConfig, seed: u64) -> Result<Probe, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_model(cfg, seed)?;
    jitter(&mut state, &mut rng, 0.3);

    let n_real = cfg.max_sentences - 2;
    let dim = cfg.embed_dim;
    let mut values = vec![0.0; cfg.max_sentences * dim];
    for v in values.iter_mut().take(n_real * dim) {
        *v = 2.0 * rng.random::<f64>() - 1.0;
    }
    let mut mask = vec![false; cfg.max_sentences];
    mask[..n_real].fill(true);
    let matrix = SentenceMatrix {
        article_id: 0,
        values,
        rows: cfg.max_sentences,
        dim,
        n_real,
        mask,
    };
    let headline: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let teacher = if cfg.variant.wants_headline_words() {
        Some(vec![3usize, 4, 5, 2])
    } else {
        None
    };
    Ok(Probe {
        state,
        matrix,
        headline,
        teacher,
    })
}

fn loss_value(probe: &Probe, mode: Mode) -> Result<f64, ModelError> {
    let mut graph = ModelGraph::new(&probe.state, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = graph.forward_article(
        &probe.matrix,
        &probe.headline,
        probe.teacher.as_deref(),
        &mut rng,
    )?;
    let loss = graph.loss(&pass)?;
    Ok(graph.tape.value(loss.total)?.data()[0])
}

/// Checks one variant at toy scale. The check runs the forward pass in
/// train mode with dropout disabled, so the batch-statistics path of the
/// normalization layer is part of what gets differentiated.
pub fn check_variant(
    cfg: &ModelConfig,
    seed: u64,
    tolerance: f64,
    corrupt_analytic: bool,
) -> Result<GradReport, ModelError> {
    if cfg.max_sentences > MAX_FD_SENTENCES {
        return Err(ModelError::InvalidConfig(format!(
            "finite differences need max_sentences <= {MAX_FD_SENTENCES}, got {}",
            cfg.max_sentences
        )));
    }
    let mut cfg = cfg.clone();
    cfg.dropout = 0.0;

    // screen probe seeds until no relu input is near its kink
    let mut probe = None;
    for attempt in 0..64 {
        let candidate = build_probe(&cfg, seed.wrapping_add(attempt))?;
        let mut graph = ModelGraph::new(&candidate.state, Mode::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        graph.forward_article(
            &candidate.matrix,
            &candidate.headline,
            candidate.teacher.as_deref(),
            &mut rng,
        )?;
        if graph.min_pre_activation() > 10.0 * FD_STEP {
            probe = Some(candidate);
            break;
        }
    }
    let mut probe = probe.ok_or_else(|| {
        ModelError::InvalidConfig("no kink-free probe seed found".to_string())
    })?;

    // analytic gradients
    let mut graph = ModelGraph::new(&probe.state, Mode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = graph.forward_article(
        &probe.matrix,
        &probe.headline,
        probe.teacher.as_deref(),
        &mut rng,
    )?;
    let loss = graph.loss(&pass)?;
    graph.tape.backward(loss.total)?;
    let mut analytic = graph.param_grads()?;
    drop(graph);

    if corrupt_analytic {
        if let Some((_, g)) = analytic.iter_mut().next() {
            if let Some(v) = g.first_mut() {
                *v += 1.0;
            }
        }
    }

    let names: Vec<String> = probe.state.param_names();
    let mut groups = Vec::with_capacity(names.len());
    let mut worst = (String::new(), 0.0f64);
    for name in names {
        let theta = probe.state.param(&name).data().to_vec();
        let numeric = central_diff(&theta, |vals| {
            probe.state.param_mut(&name).data_mut().copy_from_slice(vals);
            let v = loss_value(&probe, Mode::Train).expect("probe forward");
            v
        }, FD_STEP);
        probe.state.param_mut(&name).data_mut().copy_from_slice(&theta);

        let err = max_rel_err(&analytic[&name], &numeric);
        if err > worst.1 {
            worst = (name.clone(), err);
        }
        groups.push(GroupReport {
            name,
            max_rel_err: err,
        });
    }

    let max = worst.1;
    Ok(GradReport {
        variant: cfg.variant,
        groups,
        max_rel_err: max,
        worst: worst.0,
        passed: max <= tolerance,
    })
}

/// Runs the toy-scale check for all three variants.
pub fn check_all_variants(seed: u64, tolerance: f64) -> Result<Vec<GradReport>, ModelError> {
    [Variant::Hv, Variant::Ohwv, Variant::Combined]
        .into_iter()
        .map(|variant| check_variant(&toy_config(variant), seed, tolerance, false))
        .collect()
}
