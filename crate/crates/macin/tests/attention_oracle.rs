//! Explicit-loop oracle for the attention pipeline. Every formula here is
//! written out index by index, independently of the vectorized tape ops,
//! and the two paths must agree to 1e-10 on randomized toy instances.

use macin::corpus::SentenceMatrix;
use macin::model::{init_model, ModelConfig, ModelGraph, ModelState, Variant};
use ndtensor::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_config(heads: usize, filters: usize, sentences: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        max_sentences: sentences,
        conv_width: 2,
        filters,
        heads,
        vocab_total: 7,
        max_headline_words: 5,
        variant: Variant::Hv,
        dropout: 0.0,
        decoder_hidden: 4,
        decoder_embed: 3,
        ..ModelConfig::default()
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, cfg: &ModelConfig, n_real: usize) -> SentenceMatrix {
    let rows = cfg.max_sentences;
    let dim = cfg.embed_dim;
    let mut values = vec![0.0; rows * dim];
    for v in values.iter_mut().take(n_real * dim) {
        *v = 2.0 * rng.random::<f64>() - 1.0;
    }
    let mut mask = vec![false; rows];
    mask[..n_real].fill(true);
    SentenceMatrix {
        article_id: 0,
        values,
        rows,
        dim,
        n_real,
        mask,
    }
}

fn random_headline(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
}

/// Dense column `j` of a row-major `[rows × cols]` buffer.
fn col(buf: &[f64], rows: usize, cols: usize, j: usize) -> Vec<f64> {
    (0..rows).map(|r| buf[r * cols + j]).collect()
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum())
        .collect()
}

/// Masked softmax over one score vector, max-subtracted like the real op.
fn softmax_masked_oracle(scores: &[f64], mask: &[bool]) -> Vec<f64> {
    let maxv = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| (s - maxv).exp())
        .sum();
    scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - maxv).exp() / denom } else { 0.0 })
        .collect()
}

/// One self-attention head by explicit loops: pairwise scores between the
/// query-projected and key-projected sentence columns, key-axis softmax,
/// value mixing, output projection, then the scaled residual.
#[allow(clippy::too_many_arguments)]
fn self_head_oracle(
    x: &[f64],
    c: usize,
    n: usize,
    cb: usize,
    w_q: &[f64],
    w_k: &[f64],
    w_v: &[f64],
    w_g: &[f64],
    gamma: f64,
    lambda: f64,
    mask: &[bool],
) -> (Vec<f64>, Vec<f64>) {
    let q: Vec<Vec<f64>> = (0..n).map(|i| matvec(w_q, cb, c, &col(x, c, n, i))).collect();
    let k: Vec<Vec<f64>> = (0..n).map(|j| matvec(w_k, cb, c, &col(x, c, n, j))).collect();
    let v: Vec<Vec<f64>> = (0..n).map(|i| matvec(w_v, cb, c, &col(x, c, n, i))).collect();

    // beta[j][i]: relevance of key position i for output position j
    let mut beta = vec![0.0; n * n];
    for j in 0..n {
        let scores: Vec<f64> = (0..n)
            .map(|i| (0..cb).map(|t| q[i][t] * k[j][t]).sum())
            .collect();
        let row = softmax_masked_oracle(&scores, mask);
        beta[j * n..(j + 1) * n].copy_from_slice(&row);
    }

    let mut out = vec![0.0; c * n];
    for j in 0..n {
        let mut ctx = vec![0.0; cb];
        for i in 0..n {
            for (t, cval) in ctx.iter_mut().enumerate() {
                *cval += beta[j * n + i] * v[i][t];
            }
        }
        let projected = matvec(w_g, c, cb, &ctx);
        for ch in 0..c {
            out[ch * n + j] = gamma * x[ch * n + j] + lambda * projected[ch];
        }
    }
    (out, beta)
}

/// Multihead self-attention by loops: every head from the same input,
/// concatenated along the channel axis in head order.
fn multihead_oracle(
    state: &ModelState,
    x: &[f64],
    n: usize,
    mask: &[bool],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let c = state.config.filters;
    let cb = state.config.head_dim();
    let m = state.config.heads;
    let mut msa = vec![0.0; m * c * n];
    let mut betas = Vec::new();
    for head in 0..m {
        let (out, beta) = self_head_oracle(
            x,
            c,
            n,
            cb,
            state.param(&format!("self.{head}.query")).data(),
            state.param(&format!("self.{head}.key")).data(),
            state.param(&format!("self.{head}.value")).data(),
            state.param(&format!("self.{head}.out")).data(),
            state.param(&format!("self.{head}.input_scale")).data()[0],
            state.param(&format!("self.{head}.context_scale")).data()[0],
            mask,
        );
        msa[head * c * n..(head + 1) * c * n].copy_from_slice(&out);
        betas.push(beta);
    }
    (msa, betas)
}

/// Cross-attention by loops: the projected headline scores every column of
/// the stacked representation; the context is broadcast over positions and
/// mixed into the head's own channel block.
fn cross_oracle(
    state: &ModelState,
    msa: &[f64],
    n: usize,
    headline: &[f64],
    mask: &[bool],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let c = state.config.filters;
    let cb = state.config.head_dim();
    let m = state.config.heads;
    let d = state.config.embed_dim;
    let mc = m * c;
    let mut mca = vec![0.0; mc * n];
    let mut alphas = Vec::new();
    for head in 0..m {
        let w_h = state.param(&format!("cross.{head}.headline")).data();
        let w_k = state.param(&format!("cross.{head}.key")).data();
        let w_v = state.param(&format!("cross.{head}.value")).data();
        let w_g = state.param(&format!("cross.{head}.out")).data();
        let gamma = state.param(&format!("cross.{head}.input_scale")).data()[0];
        let lambda = state.param(&format!("cross.{head}.context_scale")).data()[0];

        let h_bar = matvec(w_h, cb, d, headline);
        let scores: Vec<f64> = (0..n)
            .map(|j| {
                let kj = matvec(w_k, cb, mc, &col(msa, mc, n, j));
                (0..cb).map(|t| h_bar[t] * kj[t]).sum()
            })
            .collect();
        let alpha = softmax_masked_oracle(&scores, mask);

        let mut ctx = vec![0.0; cb];
        for j in 0..n {
            let vj = matvec(w_v, cb, mc, &col(msa, mc, n, j));
            for (t, cval) in ctx.iter_mut().enumerate() {
                *cval += alpha[j] * vj[t];
            }
        }
        let projected = matvec(w_g, c, cb, &ctx);
        for ch in 0..c {
            for j in 0..n {
                mca[(head * c + ch) * n + j] =
                    gamma * msa[(head * c + ch) * n + j] + lambda * projected[ch];
            }
        }
        alphas.push(alpha);
    }
    (mca, alphas)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Jitters every parameter so the attention paths are active (the scales
/// start at the exact identity otherwise).
fn perturbed_state(cfg: &ModelConfig, seed: u64) -> ModelState {
    let mut state = init_model(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for name in state.param_names() {
        for v in state.param_mut(&name).data_mut() {
            *v += 0.4 * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    state
}

#[test]
fn vectorized_attention_matches_loop_oracle_on_fifty_instances() {
    let start = std::time::Instant::now();
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let heads = 1 + (trial % 2) as usize;
        let filters = 8 * (1 + (trial % 2) as usize) / 1;
        let n = 3 + (trial % 2) as usize;
        let cfg = toy_config(heads, filters, n + 1);
        let state = perturbed_state(&cfg, trial);
        let n_real = n.min(cfg.max_sentences - 1).max(2);
        let matrix = random_matrix(&mut rng, &cfg, n_real);
        let headline = random_headline(&mut rng, cfg.embed_dim);

        let mut graph = ModelGraph::new(&state, Mode::Eval);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let pass = graph.forward_article(&matrix, &headline, None, &mut drng).unwrap();

        let x = graph.tape.value(pass.conv_out).unwrap().data().to_vec();
        let n_cols = cfg.max_sentences;
        let (msa_expect, betas_expect) = multihead_oracle(&state, &x, n_cols, &matrix.mask);
        let msa_actual = graph.tape.value(pass.msa_out).unwrap().data();
        assert!(max_abs_diff(msa_actual, &msa_expect) <= 1e-10, "msa trial {trial}");
        for (head, beta_expect) in betas_expect.iter().enumerate() {
            let beta_actual = graph.tape.value(pass.self_attention[head]).unwrap().data();
            assert!(max_abs_diff(beta_actual, beta_expect) <= 1e-10, "beta trial {trial}");
        }

        let (mca_expect, alphas_expect) =
            cross_oracle(&state, msa_actual, n_cols, &headline, &matrix.mask);
        let mca_actual = graph.tape.value(pass.mca_out).unwrap().data();
        assert!(max_abs_diff(mca_actual, &mca_expect) <= 1e-10, "mca trial {trial}");
        for (head, alpha_expect) in alphas_expect.iter().enumerate() {
            let alpha_actual = graph.tape.value(pass.cross_attention[head]).unwrap().data();
            assert!(max_abs_diff(alpha_actual, alpha_expect) <= 1e-10, "alpha trial {trial}");
        }
    }
    assert!(start.elapsed().as_secs_f64() < 10.0, "oracle comparison too slow");
}

#[test]
fn fresh_initialization_is_an_exact_identity() {
    let cfg = toy_config(2, 16, 6);
    let state = init_model(&cfg, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let matrix = random_matrix(&mut rng, &cfg, 4);
    let headline = random_headline(&mut rng, cfg.embed_dim);

    let mut graph = ModelGraph::new(&state, Mode::Eval);
    let mut drng = ChaCha8Rng::seed_from_u64(0);
    let pass = graph.forward_article(&matrix, &headline, None, &mut drng).unwrap();

    let x = graph.tape.value(pass.conv_out).unwrap().data().to_vec();
    let msa = graph.tape.value(pass.msa_out).unwrap().data().to_vec();
    let mca = graph.tape.value(pass.mca_out).unwrap().data().to_vec();

    // every head block of the self-attention output IS the conv output
    let block = x.len();
    for head in 0..cfg.heads {
        assert_eq!(&msa[head * block..(head + 1) * block], x.as_slice(), "head {head}");
    }
    // and cross-attention passes the stack through untouched
    assert_eq!(mca, msa);
}

#[test]
fn identical_sentences_get_identical_attention_rows() {
    let mut cfg = toy_config(1, 8, 5);
    cfg.conv_width = 1; // keep conv strictly per-position
    let state = perturbed_state(&cfg, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let dim = cfg.embed_dim;
    let sentence: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut values = vec![0.0; cfg.max_sentences * dim];
    for r in 0..3 {
        values[r * dim..(r + 1) * dim].copy_from_slice(&sentence);
    }
    let mut mask = vec![false; cfg.max_sentences];
    mask[..3].fill(true);
    let matrix = SentenceMatrix {
        article_id: 0,
        values,
        rows: cfg.max_sentences,
        dim,
        n_real: 3,
        mask,
    };
    let headline = random_headline(&mut rng, dim);

    let mut graph = ModelGraph::new(&state, Mode::Eval);
    let mut drng = ChaCha8Rng::seed_from_u64(0);
    let pass = graph.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let beta = graph.tape.value(pass.self_attention[0]).unwrap();
    let n = cfg.max_sentences;
    let row0 = &beta.data()[..n];
    let row2 = &beta.data()[2 * n..3 * n];
    assert!(max_abs_diff(row0, row2) <= 1e-12);
}

#[test]
fn single_head_concat_is_the_head_itself() {
    let cfg = toy_config(1, 8, 4);
    let state = perturbed_state(&cfg, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let matrix = random_matrix(&mut rng, &cfg, 3);
    let headline = random_headline(&mut rng, cfg.embed_dim);

    let mut graph = ModelGraph::new(&state, Mode::Eval);
    let mut drng = ChaCha8Rng::seed_from_u64(0);
    let pass = graph.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let x = graph.tape.value(pass.conv_out).unwrap().data().to_vec();
    let msa = graph.tape.value(pass.msa_out).unwrap().data().to_vec();
    let (head_out, _) = multihead_oracle(&state, &x, cfg.max_sentences, &matrix.mask);
    assert_eq!(msa.len(), head_out.len());
    assert!(max_abs_diff(&msa, &head_out) <= 1e-10);
}

#[test]
fn four_heads_of_eight_filters_stack_to_thirty_two_rows() {
    let cfg = toy_config(4, 8, 4);
    let state = init_model(&cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let matrix = random_matrix(&mut rng, &cfg, 3);
    let headline = random_headline(&mut rng, cfg.embed_dim);
    let mut graph = ModelGraph::new(&state, Mode::Eval);
    let mut drng = ChaCha8Rng::seed_from_u64(0);
    let pass = graph.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let msa = graph.tape.value(pass.msa_out).unwrap();
    assert_eq!(msa.shape(), &[32, 4]);
}

#[test]
fn head_block_matches_standalone_single_head_model() {
    // rows [C, 2C) of a two-head model reproduce head 1 run on its own
    let cfg2 = toy_config(2, 8, 5);
    let state2 = perturbed_state(&cfg2, 21);
    let mut cfg1 = cfg2.clone();
    cfg1.heads = 1;
    let mut state1 = init_model(&cfg1, 21).unwrap();
    for name in ["conv.kernel", "conv.bias", "bn.scale", "bn.shift"] {
        *state1.param_mut(name) = state2.param(name).clone();
    }
    for suffix in ["query", "key", "value", "out", "input_scale", "context_scale"] {
        *state1.param_mut(&format!("self.0.{suffix}")) =
            state2.param(&format!("self.1.{suffix}")).clone();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let matrix = random_matrix(&mut rng, &cfg2, 4);
    let headline = random_headline(&mut rng, cfg2.embed_dim);

    let mut g2 = ModelGraph::new(&state2, Mode::Eval);
    let mut drng = ChaCha8Rng::seed_from_u64(0);
    let pass2 = g2.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let msa2 = g2.tape.value(pass2.msa_out).unwrap().data().to_vec();

    let mut g1 = ModelGraph::new(&state1, Mode::Eval);
    let pass1 = g1.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let msa1 = g1.tape.value(pass1.msa_out).unwrap().data().to_vec();

    let c = cfg2.filters;
    let n = cfg2.max_sentences;
    assert_eq!(&msa2[c * n..2 * c * n], msa1.as_slice());
}

#[test]
fn permuting_heads_permutes_output_blocks() {
    let cfg = toy_config(2, 8, 5);
    let state = perturbed_state(&cfg, 31);
    let mut swapped = state.clone();
    for suffix in ["query", "key", "value", "out", "input_scale", "context_scale"] {
        let a = state.param(&format!("self.0.{suffix}")).clone();
        let b = state.param(&format!("self.1.{suffix}")).clone();
        *swapped.param_mut(&format!("self.0.{suffix}")) = b;
        *swapped.param_mut(&format!("self.1.{suffix}")) = a;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let matrix = random_matrix(&mut rng, &cfg, 4);
    let headline = random_headline(&mut rng, cfg.embed_dim);
    let mut drng = ChaCha8Rng::seed_from_u64(0);

    let mut g0 = ModelGraph::new(&state, Mode::Eval);
    let p0 = g0.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let msa0 = g0.tape.value(p0.msa_out).unwrap().data().to_vec();

    let mut g1 = ModelGraph::new(&swapped, Mode::Eval);
    let p1 = g1.forward_article(&matrix, &headline, None, &mut drng).unwrap();
    let msa1 = g1.tape.value(p1.msa_out).unwrap().data().to_vec();

    let block = cfg.filters * cfg.max_sentences;
    assert_eq!(&msa0[..block], &msa1[block..2 * block]);
    assert_eq!(&msa0[block..2 * block], &msa1[..block]);
}
