use indexmap::IndexMap;
use rand::Rng;

use ndtensor::{BnConfig, BnStats, Mode, Tape, Tensor, Var};

use crate::corpus::{SentenceMatrix, EOS_ID};
use crate::error::ModelError;
use crate::model::ModelState;

/// One article's worth of graph nodes: the representations at each stage,
/// the attention maps, and the active decoder outputs.
#[derive(Debug)]
pub struct ArticlePass {
    pub conv_out: Var,
    pub msa_out: Var,
    pub mca_out: Var,
    /// Per-head sentence-to-sentence attention, each `N×N`.
    pub self_attention: Vec<Var>,
    /// Per-head headline-to-sentence attention, each `1×N`.
    pub cross_attention: Vec<Var>,
    /// Generated headline vector (`D×1`), for the vector variants.
    pub headline_vector: Option<Var>,
    /// Per-step word distributions (`1×V`), for the word variants.
    pub word_steps: Option<Vec<Var>>,
    /// Greedily decoded ids when no teacher sequence was supplied.
    pub generated_ids: Option<Vec<usize>>,
    pub teacher: Option<Vec<usize>>,
    headline_input: Var,
    n_real: usize,
    real_mask: Vec<bool>,
}

/// Scalar loss nodes for one article: the total plus the per-signal parts.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub headline_vector: Option<Var>,
    pub headline_words: Option<Var>,
}

/// Plain-value outputs of a forward pass, detached from the tape.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub headline_vector: Option<Vec<f64>>,
    /// Row-per-step word distributions.
    pub word_distributions: Option<Vec<Vec<f64>>>,
    pub generated_ids: Option<Vec<usize>>,
    /// Per-head headline-to-sentence weights, each of length `N`.
    pub cross_attention: Vec<Vec<f64>>,
    /// Per-head sentence-to-sentence weights, each flattened `N×N` row-major.
    pub self_attention: Vec<Vec<f64>>,
    pub sentence_capacity: usize,
    pub n_real: usize,
}

/// One article's inputs for a batched forward pass.
pub struct BatchSample<'a> {
    pub matrix: &'a SentenceMatrix,
    pub headline: &'a [f64],
    pub teacher: Option<&'a [usize]>,
}

/// Tape builder that shares one set of parameter leaves across the
/// articles of a batch, so per-parameter gradients accumulate sample
/// sums that the trainer then averages. Batch normalization statistics
/// are computed over the real sentence positions of the whole batch.
pub struct ModelGraph<'s> {
    state: &'s ModelState,
    pub tape: Tape,
    param_vars: IndexMap<String, Var>,
    bn_working: BnStats,
    mode: Mode,
    min_pre_activation: f64,
}

impl<'s> ModelGraph<'s> {
    pub fn new(state: &'s ModelState, mode: Mode) -> Self {
        let mut tape = Tape::new();
        let mut param_vars = IndexMap::new();
        for (name, tensor) in state.params() {
            param_vars.insert(name.to_string(), tape.leaf(tensor.clone().with_grad()));
        }
        ModelGraph {
            state,
            tape,
            param_vars,
            bn_working: state.bn_running.clone(),
            mode,
            min_pre_activation: f64::INFINITY,
        }
    }

    fn p(&self, name: &str) -> Var {
        self.param_vars[name]
    }

    /// Batch-norm statistics as updated by the train-mode passes recorded
    /// so far; the trainer commits these back into the model state.
    pub fn bn_stats(&self) -> &BnStats {
        &self.bn_working
    }

    /// Smallest pre-relu magnitude seen at real sentence positions, for
    /// screening finite-difference probes away from the relu kink.
    pub fn min_pre_activation(&self) -> f64 {
        self.min_pre_activation
    }

    /// Runs the full network on one article (a batch of one).
    pub fn forward_article<R: Rng>(
        &mut self,
        matrix: &SentenceMatrix,
        headline: &[f64],
        teacher: Option<&[usize]>,
        rng: &mut R,
    ) -> Result<ArticlePass, ModelError> {
        let sample = BatchSample {
            matrix,
            headline,
            teacher,
        };
        let mut passes = self.forward_batch(std::slice::from_ref(&sample), rng)?;
        Ok(passes.pop().expect("one pass per sample"))
    }

    fn validate_sample(&self, sample: &BatchSample) -> Result<(), ModelError> {
        let cfg = &self.state.config;
        if sample.matrix.dim != cfg.embed_dim {
            return Err(ModelError::InvalidConfig(format!(
                "article embedding width {} does not match model width {}",
                sample.matrix.dim, cfg.embed_dim
            )));
        }
        if sample.headline.len() != cfg.embed_dim {
            return Err(ModelError::InvalidConfig(format!(
                "headline vector length {} does not match model width {}",
                sample.headline.len(),
                cfg.embed_dim
            )));
        }
        if sample.matrix.n_real == 0 {
            return Err(ModelError::InvalidConfig(
                "article has no real sentences".to_string(),
            ));
        }
        if let Some(t) = sample.teacher {
            if t.len() > cfg.max_headline_words {
                return Err(ModelError::TeacherTooLong {
                    len: t.len(),
                    max: cfg.max_headline_words,
                });
            }
        }
        Ok(())
    }

    /// Runs the conv block over the whole batch (shared normalization
    /// statistics), then attention and decoding per article.
    pub fn forward_batch<R: Rng>(
        &mut self,
        samples: &[BatchSample],
        rng: &mut R,
    ) -> Result<Vec<ArticlePass>, ModelError> {
        let cfg = self.state.config.clone();
        for sample in samples {
            self.validate_sample(sample)?;
        }

        // sentence matrices enter the graph transposed: embeddings down
        // the rows, sentence positions across the columns
        let mut conv_outs = Vec::with_capacity(samples.len());
        let mut batch_mask = Vec::new();
        for sample in samples {
            let n = sample.matrix.rows;
            let mut input_data = vec![0.0; cfg.embed_dim * n];
            for j in 0..n {
                for d in 0..cfg.embed_dim {
                    input_data[d * n + j] = sample.matrix.values[j * sample.matrix.dim + d];
                }
            }
            let input = self.tape.leaf(Tensor::new(vec![cfg.embed_dim, n], input_data)?);
            let conv = self
                .tape
                .conv1d(input, self.p("conv.kernel"), self.p("conv.bias"))?;
            conv_outs.push(conv);
            batch_mask.extend_from_slice(&sample.matrix.mask);
        }
        let dropped = self.normalize_batch(&conv_outs, &batch_mask, rng)?;

        let mut passes = Vec::with_capacity(samples.len());
        let mut offset = 0;
        for sample in samples {
            let n = sample.matrix.rows;
            let x = self.tape.slice_cols(dropped, offset, n)?;
            offset += n;
            passes.push(self.attend_and_decode(sample, x)?);
        }
        Ok(passes)
    }

    /// batchnorm → relu → dropout over the concatenated conv outputs,
    /// statistics restricted to the batch's real sentence positions.
    fn normalize_batch<R: Rng>(
        &mut self,
        conv_outs: &[Var],
        batch_mask: &[bool],
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let cfg = &self.state.config;
        let bn_cfg = BnConfig {
            eps: cfg.bn_eps,
            momentum: cfg.bn_momentum,
        };
        let stacked = self.tape.concat_cols(conv_outs)?;
        let normed = self.tape.batchnorm1d(
            stacked,
            self.p("bn.scale"),
            self.p("bn.shift"),
            &mut self.bn_working,
            Some(batch_mask),
            self.mode,
            &bn_cfg,
        )?;
        {
            let t = self.tape.value(normed)?;
            let n = t.cols();
            for ch in 0..t.rows() {
                for (j, &real) in batch_mask.iter().enumerate() {
                    if real {
                        let v = t.data()[ch * n + j].abs();
                        if v < self.min_pre_activation {
                            self.min_pre_activation = v;
                        }
                    }
                }
            }
        }
        let activated = self.tape.relu(normed)?;
        let dropped = self.tape.dropout(activated, cfg.dropout, self.mode, rng)?;
        Ok(dropped)
    }

    /// Attention stages and the active decoders for one article, given its
    /// slice of the normalized conv features.
    fn attend_and_decode(&mut self, sample: &BatchSample, x: Var) -> Result<ArticlePass, ModelError> {
        let cfg = &self.state.config;
        let matrix = sample.matrix;
        let n = matrix.rows;
        let real_mask = matrix.mask.clone();
        let attn_mask: Vec<bool> = if cfg.mask_attention {
            real_mask.clone()
        } else {
            vec![true; n]
        };

        let conv_out = x;
        let (msa_out, self_attention) = self.multihead_self(conv_out, &attn_mask)?;

        let headline_input = self
            .tape
            .leaf(Tensor::new(vec![cfg.embed_dim, 1], sample.headline.to_vec())?);
        let (mca_out, cross_attention) =
            self.cross_attention(msa_out, headline_input, &attn_mask)?;

        let pooled = self.tape.masked_mean_cols(mca_out, &real_mask)?;

        let headline_vector = if cfg.variant.wants_headline_vector() {
            let projected = self.tape.matmul(self.p("hv.weight"), pooled)?;
            Some(self.tape.add(projected, self.p("hv.bias"))?)
        } else {
            None
        };

        let (word_steps, generated_ids) = if cfg.variant.wants_headline_words() {
            let (steps, ids) = self.decode_words(pooled, sample.teacher)?;
            (Some(steps), ids)
        } else {
            (None, None)
        };

        Ok(ArticlePass {
            conv_out,
            msa_out,
            mca_out,
            self_attention,
            cross_attention,
            headline_vector,
            word_steps,
            generated_ids,
            teacher: sample.teacher.map(|t| t.to_vec()),
            headline_input,
            n_real: matrix.n_real,
            real_mask,
        })
    }

    /// One self-attention head: relevance between every sentence pair,
    /// normalized over the key axis, with the scaled residual output.
    fn self_attention_head(
        &mut self,
        x: Var,
        attn_mask: &[bool],
        head: usize,
    ) -> Result<(Var, Var), ModelError> {
        let q = self.tape.matmul(self.p(&format!("self.{head}.query")), x)?;
        let k = self.tape.matmul(self.p(&format!("self.{head}.key")), x)?;
        let v = self.tape.matmul(self.p(&format!("self.{head}.value")), x)?;
        // logits row j holds the scores of output position j against every
        // key position, so the softmax normalizes over the keys
        let k_t = self.tape.transpose(k)?;
        let logits = self.tape.matmul(k_t, q)?;
        let beta = self.tape.softmax_masked(logits, attn_mask)?;
        let beta_t = self.tape.transpose(beta)?;
        let context = self.tape.matmul(v, beta_t)?;
        let projected = self.tape.matmul(self.p(&format!("self.{head}.out")), context)?;
        let kept = self.tape.scale_var(x, self.p(&format!("self.{head}.input_scale")))?;
        let mixed = self
            .tape
            .scale_var(projected, self.p(&format!("self.{head}.context_scale")))?;
        let out = self.tape.add(kept, mixed)?;
        Ok((out, beta))
    }

    fn multihead_self(&mut self, x: Var, attn_mask: &[bool]) -> Result<(Var, Vec<Var>), ModelError> {
        let heads = self.state.config.heads;
        let mut outputs = Vec::with_capacity(heads);
        let mut betas = Vec::with_capacity(heads);
        for head in 0..heads {
            let (out, beta) = self.self_attention_head(x, attn_mask, head)?;
            outputs.push(out);
            betas.push(beta);
        }
        let msa = self.tape.concat_rows(&outputs)?;
        Ok((msa, betas))
    }

    /// One cross-attention head: the projected headline scores every
    /// sentence column of the stacked self-attention output; the resulting
    /// context is broadcast across positions and mixed into this head's
    /// channel block by the same scaled-residual rule.
    fn cross_attention_head(
        &mut self,
        msa: Var,
        headline: Var,
        attn_mask: &[bool],
        head: usize,
        n: usize,
    ) -> Result<(Var, Var), ModelError> {
        let c = self.state.config.filters;
        let h_bar = self.tape.matmul(self.p(&format!("cross.{head}.headline")), headline)?;
        let keys = self.tape.matmul(self.p(&format!("cross.{head}.key")), msa)?;
        let values = self.tape.matmul(self.p(&format!("cross.{head}.value")), msa)?;
        let h_bar_t = self.tape.transpose(h_bar)?;
        let logits = self.tape.matmul(h_bar_t, keys)?;
        let alpha = self.tape.softmax_masked(logits, attn_mask)?;
        let alpha_t = self.tape.transpose(alpha)?;
        let context = self.tape.matmul(values, alpha_t)?;
        let projected = self.tape.matmul(self.p(&format!("cross.{head}.out")), context)?;
        let spread = self.tape.broadcast_cols(projected, n)?;
        let block = self.tape.slice_rows(msa, head * c, c)?;
        let kept = self
            .tape
            .scale_var(block, self.p(&format!("cross.{head}.input_scale")))?;
        let mixed = self
            .tape
            .scale_var(spread, self.p(&format!("cross.{head}.context_scale")))?;
        let out = self.tape.add(kept, mixed)?;
        Ok((out, alpha))
    }

    fn cross_attention(
        &mut self,
        msa: Var,
        headline: Var,
        attn_mask: &[bool],
    ) -> Result<(Var, Vec<Var>), ModelError> {
        let heads = self.state.config.heads;
        let n = self.tape.value(msa)?.cols();
        let mut outputs = Vec::with_capacity(heads);
        let mut alphas = Vec::with_capacity(heads);
        for head in 0..heads {
            let (out, alpha) = self.cross_attention_head(msa, headline, attn_mask, head, n)?;
            outputs.push(out);
            alphas.push(alpha);
        }
        let mca = self.tape.concat_rows(&outputs)?;
        Ok((mca, alphas))
    }

    /// Recurrent word decoder. Teacher forcing consumes the previous
    /// target word's embedding; greedy decoding feeds back its own argmax
    /// and stops at EOS or the word cap.
    fn decode_words(
        &mut self,
        pooled: Var,
        teacher: Option<&[usize]>,
    ) -> Result<(Vec<Var>, Option<Vec<usize>>), ModelError> {
        let cfg = &self.state.config;
        let hidden = cfg.decoder_hidden;
        let init_lin = self.tape.matmul(self.p("ohwv.init_weight"), pooled)?;
        let init_aff = self.tape.add(init_lin, self.p("ohwv.init_bias"))?;
        let mut h_state = self.tape.tanh(init_aff)?;
        let mut c_state = self.tape.leaf(Tensor::zeros(vec![hidden, 1]));

        let mut steps = Vec::new();
        let mut generated = Vec::new();
        let max_steps = match teacher {
            Some(t) => t.len(),
            None => cfg.max_headline_words,
        };
        let mut prev_id: Option<usize> = None;
        for t in 0..max_steps {
            let input = match (teacher, t) {
                (_, 0) => self.p("ohwv.start"),
                (Some(ids), _) => self.tape.select_row(self.p("ohwv.embed"), ids[t - 1])?,
                (None, _) => self
                    .tape
                    .select_row(self.p("ohwv.embed"), prev_id.expect("previous id"))?,
            };
            let from_input = self.tape.matmul(self.p("ohwv.gate_input"), input)?;
            let from_hidden = self.tape.matmul(self.p("ohwv.gate_hidden"), h_state)?;
            let pre = self.tape.add(from_input, from_hidden)?;
            let gates = self.tape.add(pre, self.p("ohwv.gate_bias"))?;
            let input_gate = {
                let s = self.tape.slice_rows(gates, 0, hidden)?;
                self.tape.sigmoid(s)?
            };
            let forget_gate = {
                let s = self.tape.slice_rows(gates, hidden, hidden)?;
                self.tape.sigmoid(s)?
            };
            let candidate = {
                let s = self.tape.slice_rows(gates, 2 * hidden, hidden)?;
                self.tape.tanh(s)?
            };
            let output_gate = {
                let s = self.tape.slice_rows(gates, 3 * hidden, hidden)?;
                self.tape.sigmoid(s)?
            };
            let kept = self.tape.mul(forget_gate, c_state)?;
            let written = self.tape.mul(input_gate, candidate)?;
            c_state = self.tape.add(kept, written)?;
            let squashed = self.tape.tanh(c_state)?;
            h_state = self.tape.mul(output_gate, squashed)?;

            let logits = self.tape.matmul(self.p("ohwv.proj_weight"), h_state)?;
            let logits = self.tape.add(logits, self.p("ohwv.proj_bias"))?;
            let logits_row = self.tape.transpose(logits)?;
            let dist = self.tape.softmax(logits_row)?;
            steps.push(dist);

            if teacher.is_none() {
                let values = self.tape.value(dist)?.data();
                let mut best = 0;
                for (i, &v) in values.iter().enumerate() {
                    if v > values[best] {
                        best = i;
                    }
                }
                generated.push(best);
                if best == EOS_ID {
                    break;
                }
                prev_id = Some(best);
            }
        }
        let ids = if teacher.is_none() { Some(generated) } else { None };
        Ok((steps, ids))
    }

    /// Variant loss for one article: MSE against the headline vector,
    /// mean per-step cross-entropy against the headline words, or their
    /// unit-weight sum.
    pub fn loss(&mut self, pass: &ArticlePass) -> Result<LossVars, ModelError> {
        let cfg = &self.state.config;
        let vector_loss = match pass.headline_vector {
            Some(d_h) => Some(self.tape.mse(d_h, pass.headline_input)?),
            None => None,
        };
        let word_loss = match &pass.word_steps {
            Some(steps) => {
                let teacher = pass.teacher.as_ref().ok_or(ModelError::MissingVariantOutput {
                    variant: "word decoder",
                    output: "teacher-forced targets",
                })?;
                let mut acc: Option<Var> = None;
                for (dist, &target_id) in steps.iter().zip(teacher) {
                    let mut onehot = vec![0.0; cfg.vocab_total];
                    onehot[target_id] = 1.0;
                    let target = self.tape.leaf(Tensor::new(vec![1, cfg.vocab_total], onehot)?);
                    let step_loss = self.tape.cce(*dist, target)?;
                    acc = Some(match acc {
                        Some(prev) => self.tape.add(prev, step_loss)?,
                        None => step_loss,
                    });
                }
                let total = acc.ok_or(ModelError::MissingVariantOutput {
                    variant: "word decoder",
                    output: "at least one step",
                })?;
                Some(self.tape.scale_const(total, 1.0 / steps.len() as f64)?)
            }
            None => None,
        };
        let total = match (vector_loss, word_loss) {
            (Some(v), Some(w)) => self.tape.add(v, w)?,
            (Some(v), None) => v,
            (None, Some(w)) => w,
            (None, None) => {
                return Err(ModelError::MissingVariantOutput {
                    variant: "model",
                    output: "any loss term",
                })
            }
        };
        Ok(LossVars {
            total,
            headline_vector: vector_loss,
            headline_words: word_loss,
        })
    }

    /// Detaches the pass outputs from the tape as plain values.
    pub fn output(&self, pass: &ArticlePass) -> Result<ForwardOutput, ModelError> {
        let headline_vector = match pass.headline_vector {
            Some(v) => Some(self.tape.value(v)?.data().to_vec()),
            None => None,
        };
        let word_distributions = match &pass.word_steps {
            Some(steps) => {
                let mut rows = Vec::with_capacity(steps.len());
                for &s in steps {
                    rows.push(self.tape.value(s)?.data().to_vec());
                }
                Some(rows)
            }
            None => None,
        };
        let mut cross_attention = Vec::with_capacity(pass.cross_attention.len());
        for &a in &pass.cross_attention {
            cross_attention.push(self.tape.value(a)?.data().to_vec());
        }
        let mut self_attention = Vec::with_capacity(pass.self_attention.len());
        for &b in &pass.self_attention {
            self_attention.push(self.tape.value(b)?.data().to_vec());
        }
        Ok(ForwardOutput {
            headline_vector,
            word_distributions,
            generated_ids: pass.generated_ids.clone(),
            cross_attention,
            self_attention,
            sentence_capacity: pass.real_mask.len(),
            n_real: pass.n_real,
        })
    }

    /// Per-parameter gradients after `tape.backward`. Parameters the loss
    /// never reached report zeros.
    pub fn param_grads(&self) -> Result<IndexMap<String, Vec<f64>>, ModelError> {
        let mut out = IndexMap::new();
        for (name, &var) in &self.param_vars {
            let grad = match self.tape.grad(var)? {
                Some(g) => g.to_vec(),
                None => vec![0.0; self.tape.value(var)?.numel()],
            };
            out.insert(name.clone(), grad);
        }
        Ok(out)
    }
}

/// Single-article convenience wrapper: forward once and return the
/// detached outputs plus the updated batch-norm statistics.
pub fn forward<R: Rng>(
    state: &ModelState,
    matrix: &SentenceMatrix,
    headline: &[f64],
    teacher: Option<&[usize]>,
    mode: Mode,
    rng: &mut R,
) -> Result<(ForwardOutput, BnStats), ModelError> {
    let mut graph = ModelGraph::new(state, mode);
    let pass = graph.forward_article(matrix, headline, teacher, rng)?;
    let output = graph.output(&pass)?;
    Ok((output, graph.bn_working))
}
