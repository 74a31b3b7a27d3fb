use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{NdError, Result};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Train/eval switch for the stochastic and statistics-tracking ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a tensor recorded on a tape. Carries the owning tape's id so
/// cross-tape misuse is caught instead of silently reading the wrong node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Per-channel running statistics for batch normalization. Non-trainable;
/// updated by train-mode forward passes and consumed in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    pub fn fresh(channels: usize) -> Self {
        BnStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Batch-normalization hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct BnConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        BnConfig {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

const CCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
struct BnSaved {
    eval: bool,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    mask: Option<Vec<bool>>,
    count: f64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Transpose { x: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    ScaleVar { x: usize, s: usize },
    ScaleConst { x: usize, c: f64 },
    Relu { x: usize },
    Sigmoid { x: usize },
    Tanh { x: usize },
    Conv1d { input: usize, kernel: usize, bias: usize, width: usize, pad_left: usize },
    SoftmaxMasked { logits: usize, mask: Vec<bool> },
    Dropout { x: usize, keep: Vec<f64> },
    BatchNorm { x: usize, scale: usize, shift: usize, saved: BnSaved },
    MaskedMeanCols { x: usize, mask: Vec<bool>, count: usize },
    BroadcastCols { x: usize },
    ConcatRows { parts: Vec<usize> },
    ConcatCols { parts: Vec<usize> },
    SliceRows { x: usize, start: usize },
    SliceCols { x: usize, start: usize },
    SelectRow { table: usize, row: usize },
    SumAll { x: usize },
    Mse { pred: usize, target: usize },
    Cce { pred: usize, target: usize },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Ordered record of executed tensor operations. Replaying it in reverse
/// accumulates gradients into every node reachable from the loss. One tape
/// per forward+backward; a tape is confined to a single execution context.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Leaves flagged `requires_grad` are the
    /// gradient targets of `backward`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.check(v)?;
        Ok(&self.nodes[v.index].tensor)
    }

    /// Accumulated gradient of a variable; `None` until backward reaches it.
    pub fn grad(&self, v: Var) -> Result<Option<&[f64]>> {
        self.check(v)?;
        Ok(self.nodes[v.index].tensor.grad())
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id {
            return Err(NdError::DetachedVar {
                var_tape: v.tape,
                tape: self.id,
            });
        }
        Ok(())
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { tensor, op });
        Var {
            tape: self.id,
            index,
        }
    }

    fn shape(&self, i: usize) -> Vec<usize> {
        self.nodes[i].tensor.shape().to_vec()
    }

    // ── forward ops ─────────────────────────────────────────────────

    /// Standard 2-d matrix product `[m,k] × [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.nodes[a.index].tensor, &self.nodes[b.index].tensor);
        if !ta.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "matmul", shape: ta.shape().to_vec() });
        }
        if !tb.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "matmul", shape: tb.shape().to_vec() });
        }
        if ta.cols() != tb.rows() {
            return Err(NdError::DimensionMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        let out = Tensor::new(vec![m, n], data).expect("matmul shape");
        Ok(self.push(out, Op::Matmul { a: a.index, b: b.index }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let t = &self.nodes[x.index].tensor;
        if !t.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "transpose", shape: t.shape().to_vec() });
        }
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], data).expect("transpose shape");
        Ok(self.push(out, Op::Transpose { x: x.index }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.nodes[a.index].tensor, &self.nodes[b.index].tensor);
        if ta.shape() != tb.shape() {
            return Err(NdError::DimensionMismatch {
                op: "add",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("add shape");
        Ok(self.push(out, Op::Add { a: a.index, b: b.index }))
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.nodes[a.index].tensor, &self.nodes[b.index].tensor);
        if ta.shape() != tb.shape() {
            return Err(NdError::DimensionMismatch {
                op: "mul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("mul shape");
        Ok(self.push(out, Op::Mul { a: a.index, b: b.index }))
    }

    /// Multiplies a tensor by a single-element variable (a learnable scale).
    pub fn scale_var(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check(x)?;
        self.check(s)?;
        let ts = &self.nodes[s.index].tensor;
        if ts.numel() != 1 {
            return Err(NdError::DimensionMismatch {
                op: "scale_var",
                left: self.shape(x.index),
                right: ts.shape().to_vec(),
            });
        }
        let sv = ts.data()[0];
        let tx = &self.nodes[x.index].tensor;
        let data: Vec<f64> = tx.data().iter().map(|v| sv * v).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("scale shape");
        Ok(self.push(out, Op::ScaleVar { x: x.index, s: s.index }))
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        let data: Vec<f64> = tx.data().iter().map(|v| c * v).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("scale shape");
        Ok(self.push(out, Op::ScaleConst { x: x.index, c }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        let data: Vec<f64> = tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("relu shape");
        Ok(self.push(out, Op::Relu { x: x.index }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        let data: Vec<f64> = tx.data().iter().map(|&v| stable_sigmoid(v)).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("sigmoid shape");
        Ok(self.push(out, Op::Sigmoid { x: x.index }))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        let data: Vec<f64> = tx.data().iter().map(|v| v.tanh()).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("tanh shape");
        Ok(self.push(out, Op::Tanh { x: x.index }))
    }

    /// Same-padding 1-d convolution along the last axis.
    ///
    /// `input` is `[D, N]`, `kernel` is `[K, D, C]`, `bias` is `[C]`; the
    /// output is `[C, N]` so position `j` in the output stays aligned with
    /// position `j` in the input (pad `K/2` left, `K-1-K/2` right).
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        self.check(input)?;
        self.check(kernel)?;
        self.check(bias)?;
        let ti = &self.nodes[input.index].tensor;
        let tk = &self.nodes[kernel.index].tensor;
        let tb = &self.nodes[bias.index].tensor;
        if !ti.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "conv1d", shape: ti.shape().to_vec() });
        }
        if tk.shape().len() != 3 {
            return Err(NdError::DimensionMismatch {
                op: "conv1d kernel",
                left: tk.shape().to_vec(),
                right: ti.shape().to_vec(),
            });
        }
        let (d_in, n) = (ti.rows(), ti.cols());
        let (width, kd, channels) = (tk.shape()[0], tk.shape()[1], tk.shape()[2]);
        if kd != d_in {
            return Err(NdError::DimensionMismatch {
                op: "conv1d",
                left: tk.shape().to_vec(),
                right: ti.shape().to_vec(),
            });
        }
        if tb.numel() != channels {
            return Err(NdError::DimensionMismatch {
                op: "conv1d bias",
                left: tb.shape().to_vec(),
                right: vec![channels],
            });
        }
        if width > n {
            return Err(NdError::KernelWiderThanInput { width, len: n });
        }
        let pad_left = width / 2;
        let mut data = vec![0.0; channels * n];
        let inp = ti.data();
        let ker = tk.data();
        for c in 0..channels {
            let b = tb.data()[c];
            for j in 0..n {
                let mut acc = b;
                for t in 0..width {
                    let pos = j as isize + t as isize - pad_left as isize;
                    if pos < 0 || pos >= n as isize {
                        continue;
                    }
                    let pos = pos as usize;
                    for d in 0..d_in {
                        acc += ker[t * d_in * channels + d * channels + c] * inp[d * n + pos];
                    }
                }
                data[c * n + j] = acc;
            }
        }
        let out = Tensor::new(vec![channels, n], data).expect("conv shape");
        Ok(self.push(
            out,
            Op::Conv1d {
                input: input.index,
                kernel: kernel.index,
                bias: bias.index,
                width,
                pad_left,
            },
        ))
    }

    /// Row-wise softmax over the last axis with a shared column mask.
    /// Masked entries come out exactly zero; each row is exp-normalized over
    /// the unmasked positions with max-subtraction for stability.
    pub fn softmax_masked(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        self.check(logits)?;
        let tl = &self.nodes[logits.index].tensor;
        let last = *tl.shape().last().unwrap_or(&0);
        if mask.len() != last {
            return Err(NdError::MaskLengthMismatch { mask: mask.len(), axis: last });
        }
        if !mask.iter().any(|&m| m) {
            return Err(NdError::FullyMaskedRow { row: 0 });
        }
        let rows = tl.numel() / last;
        let mut data = vec![0.0; tl.numel()];
        for r in 0..rows {
            let row = &tl.data()[r * last..(r + 1) * last];
            let mut maxv = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if mask[j] && v > maxv {
                    maxv = v;
                }
            }
            let mut denom = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    denom += (v - maxv).exp();
                }
            }
            for j in 0..last {
                data[r * last + j] = if mask[j] { (row[j] - maxv).exp() / denom } else { 0.0 };
            }
        }
        let out = Tensor::new(tl.shape().to_vec(), data).expect("softmax shape");
        Ok(self.push(
            out,
            Op::SoftmaxMasked {
                logits: logits.index,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Softmax over the last axis with nothing masked.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        self.check(logits)?;
        let last = *self.nodes[logits.index].tensor.shape().last().unwrap_or(&0);
        let mask = vec![true; last];
        self.softmax_masked(logits, &mask)
    }

    /// Inverted dropout: train mode zeroes entries with probability `p` and
    /// scales survivors by `1/(1-p)`; eval mode is the identity.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(NdError::InvalidDropout { p });
        }
        if mode == Mode::Eval {
            return Ok(x);
        }
        let tx = &self.nodes[x.index].tensor;
        let scale = 1.0 / (1.0 - p);
        let keep: Vec<f64> = (0..tx.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let data: Vec<f64> = tx.data().iter().zip(&keep).map(|(v, k)| v * k).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).expect("dropout shape");
        Ok(self.push(out, Op::Dropout { x: x.index, keep }))
    }

    /// Per-channel batch normalization over the columns of a `[C, N]` input.
    ///
    /// Train mode normalizes with statistics of the unmasked columns (all
    /// columns when `mask` is `None`) and folds them into `running`; eval
    /// mode normalizes with `running` and is a pure function.
    pub fn batchnorm1d(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        running: &mut BnStats,
        mask: Option<&[bool]>,
        mode: Mode,
        cfg: &BnConfig,
    ) -> Result<Var> {
        self.check(x)?;
        self.check(scale)?;
        self.check(shift)?;
        let tx = &self.nodes[x.index].tensor;
        if !tx.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "batchnorm1d", shape: tx.shape().to_vec() });
        }
        let (c, n) = (tx.rows(), tx.cols());
        if self.nodes[scale.index].tensor.numel() != c || self.nodes[shift.index].tensor.numel() != c {
            return Err(NdError::DimensionMismatch {
                op: "batchnorm1d affine",
                left: self.nodes[scale.index].tensor.shape().to_vec(),
                right: vec![c],
            });
        }
        if running.mean.len() != c || running.var.len() != c {
            return Err(NdError::StateLengthMismatch { state: running.mean.len(), param: c });
        }
        if let Some(m) = mask {
            if m.len() != n {
                return Err(NdError::MaskLengthMismatch { mask: m.len(), axis: n });
            }
        }
        let cols: Vec<usize> = match mask {
            Some(m) => (0..n).filter(|&j| m[j]).collect(),
            None => (0..n).collect(),
        };
        if mode == Mode::Train && cols.is_empty() {
            return Err(NdError::EmptyMask);
        }

        let (mean, inv_std) = match mode {
            Mode::Train => {
                let count = cols.len() as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let row = &tx.data()[ch * n..(ch + 1) * n];
                    let mu = cols.iter().map(|&j| row[j]).sum::<f64>() / count;
                    let v = cols.iter().map(|&j| (row[j] - mu).powi(2)).sum::<f64>() / count;
                    mean[ch] = mu;
                    var[ch] = v;
                    running.mean[ch] = (1.0 - cfg.momentum) * running.mean[ch] + cfg.momentum * mu;
                    running.var[ch] = (1.0 - cfg.momentum) * running.var[ch] + cfg.momentum * v;
                }
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + cfg.eps).sqrt()).collect();
                (mean, inv_std)
            }
            Mode::Eval => {
                let inv_std: Vec<f64> =
                    running.var.iter().map(|v| 1.0 / (v + cfg.eps).sqrt()).collect();
                (running.mean.clone(), inv_std)
            }
        };

        let sc = self.nodes[scale.index].tensor.data().to_vec();
        let sh = self.nodes[shift.index].tensor.data().to_vec();
        let tx = &self.nodes[x.index].tensor;
        let mut data = vec![0.0; c * n];
        for ch in 0..c {
            for j in 0..n {
                let xhat = (tx.data()[ch * n + j] - mean[ch]) * inv_std[ch];
                data[ch * n + j] = sc[ch] * xhat + sh[ch];
            }
        }
        let saved = BnSaved {
            eval: mode == Mode::Eval,
            mean,
            inv_std,
            mask: mask.map(|m| m.to_vec()),
            count: cols.len() as f64,
        };
        let out = Tensor::new(vec![c, n], data).expect("bn shape");
        Ok(self.push(
            out,
            Op::BatchNorm {
                x: x.index,
                scale: scale.index,
                shift: shift.index,
                saved,
            },
        ))
    }

    /// Mean over the unmasked columns of a `[C, N]` tensor, as `[C, 1]`.
    pub fn masked_mean_cols(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        if !tx.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "masked_mean_cols", shape: tx.shape().to_vec() });
        }
        let (c, n) = (tx.rows(), tx.cols());
        if mask.len() != n {
            return Err(NdError::MaskLengthMismatch { mask: mask.len(), axis: n });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NdError::EmptyMask);
        }
        let mut data = vec![0.0; c];
        for ch in 0..c {
            let row = &tx.data()[ch * n..(ch + 1) * n];
            data[ch] = (0..n).filter(|&j| mask[j]).map(|j| row[j]).sum::<f64>() / count as f64;
        }
        let out = Tensor::new(vec![c, 1], data).expect("pool shape");
        Ok(self.push(
            out,
            Op::MaskedMeanCols {
                x: x.index,
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// Repeats a `[C, 1]` column across `n` columns.
    pub fn broadcast_cols(&mut self, x: Var, n: usize) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        if !tx.is_2d() || tx.cols() != 1 {
            return Err(NdError::NotTwoDimensional { op: "broadcast_cols", shape: tx.shape().to_vec() });
        }
        let c = tx.rows();
        let mut data = vec![0.0; c * n];
        for ch in 0..c {
            let v = tx.data()[ch];
            for j in 0..n {
                data[ch * n + j] = v;
            }
        }
        let out = Tensor::new(vec![c, n], data).expect("broadcast shape");
        Ok(self.push(out, Op::BroadcastCols { x: x.index }))
    }

    /// Stacks 2-d tensors along the row axis, preserving order.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NdError::EmptyConcat);
        }
        for &p in parts {
            self.check(p)?;
        }
        let cols = self.nodes[parts[0].index].tensor.cols();
        let mut rows = 0;
        for &p in parts {
            let t = &self.nodes[p.index].tensor;
            if !t.is_2d() || t.cols() != cols {
                return Err(NdError::DimensionMismatch {
                    op: "concat_rows",
                    left: t.shape().to_vec(),
                    right: vec![rows, cols],
                });
            }
            rows += t.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.nodes[p.index].tensor.data());
        }
        let out = Tensor::new(vec![rows, cols], data).expect("concat shape");
        Ok(self.push(
            out,
            Op::ConcatRows {
                parts: parts.iter().map(|p| p.index).collect(),
            },
        ))
    }

    /// Stacks 2-d tensors along the column axis, preserving order.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NdError::EmptyConcat);
        }
        for &p in parts {
            self.check(p)?;
        }
        let rows = self.nodes[parts[0].index].tensor.rows();
        let mut cols = 0;
        for &p in parts {
            let t = &self.nodes[p.index].tensor;
            if !t.is_2d() || t.rows() != rows {
                return Err(NdError::DimensionMismatch {
                    op: "concat_cols",
                    left: t.shape().to_vec(),
                    right: vec![rows, cols],
                });
            }
            cols += t.cols();
        }
        let mut data = vec![0.0; rows * cols];
        let mut offset = 0;
        for &p in parts {
            let t = &self.nodes[p.index].tensor;
            let (pr, pc) = (t.rows(), t.cols());
            for r in 0..pr {
                data[r * cols + offset..r * cols + offset + pc]
                    .copy_from_slice(&t.data()[r * pc..(r + 1) * pc]);
            }
            offset += pc;
        }
        let out = Tensor::new(vec![rows, cols], data).expect("concat shape");
        Ok(self.push(
            out,
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.index).collect(),
            },
        ))
    }

    /// Columns `[start, start+len)` of a 2-d tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        if !tx.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "slice_cols", shape: tx.shape().to_vec() });
        }
        let (r, c) = (tx.rows(), tx.cols());
        if start + len > c {
            return Err(NdError::RowOutOfBounds { row: start + len, rows: c });
        }
        let mut data = vec![0.0; r * len];
        for row in 0..r {
            data[row * len..(row + 1) * len]
                .copy_from_slice(&tx.data()[row * c + start..row * c + start + len]);
        }
        let out = Tensor::new(vec![r, len], data).expect("slice shape");
        Ok(self.push(out, Op::SliceCols { x: x.index, start }))
    }

    /// Rows `[start, start+len)` of a 2-d tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.index].tensor;
        if !tx.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "slice_rows", shape: tx.shape().to_vec() });
        }
        let (r, c) = (tx.rows(), tx.cols());
        if start + len > r {
            return Err(NdError::RowOutOfBounds { row: start + len, rows: r });
        }
        let data = tx.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(vec![len, c], data).expect("slice shape");
        Ok(self.push(out, Op::SliceRows { x: x.index, start }))
    }

    /// Row `row` of a `[V, E]` table as an `[E, 1]` column (embedding lookup).
    pub fn select_row(&mut self, table: Var, row: usize) -> Result<Var> {
        self.check(table)?;
        let tt = &self.nodes[table.index].tensor;
        if !tt.is_2d() {
            return Err(NdError::NotTwoDimensional { op: "select_row", shape: tt.shape().to_vec() });
        }
        if row >= tt.rows() {
            return Err(NdError::RowOutOfBounds { row, rows: tt.rows() });
        }
        let e = tt.cols();
        let data = tt.data()[row * e..(row + 1) * e].to_vec();
        let out = Tensor::new(vec![e, 1], data).expect("select shape");
        Ok(self.push(out, Op::SelectRow { table: table.index, row }))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s: f64 = self.nodes[x.index].tensor.data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::SumAll { x: x.index }))
    }

    /// Mean squared error `(1/n) Σ (pred - target)²` as a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check(pred)?;
        self.check(target)?;
        let (tp, tt) = (&self.nodes[pred.index].tensor, &self.nodes[target.index].tensor);
        if tp.shape() != tt.shape() {
            return Err(NdError::DimensionMismatch {
                op: "mse",
                left: tp.shape().to_vec(),
                right: tt.shape().to_vec(),
            });
        }
        let n = tp.numel() as f64;
        let s: f64 = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(
            Tensor::scalar(s / n),
            Op::Mse { pred: pred.index, target: target.index },
        ))
    }

    /// Categorical cross-entropy `-Σ target_i · log(pred_i)` with the
    /// prediction clamped at 1e-12 inside the log. The prediction must be a
    /// probability vector and the target one-hot.
    pub fn cce(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check(pred)?;
        self.check(target)?;
        let (tp, tt) = (&self.nodes[pred.index].tensor, &self.nodes[target.index].tensor);
        if tp.numel() != tt.numel() {
            return Err(NdError::DimensionMismatch {
                op: "cce",
                left: tp.shape().to_vec(),
                right: tt.shape().to_vec(),
            });
        }
        let sum: f64 = tp.data().iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(NdError::NotNormalized { sum });
        }
        let mut ones = 0;
        for (i, &v) in tt.data().iter().enumerate() {
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                return Err(NdError::NotOneHot { index: i, value: v });
            }
        }
        if ones != 1 {
            return Err(NdError::NotOneHot {
                index: tt.numel(),
                value: ones as f64,
            });
        }
        let loss: f64 = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(&p, &t)| -t * p.max(CCE_CLAMP).ln())
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Cce { pred: pred.index, target: target.index },
        ))
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse-mode accumulation from a scalar loss. Visits every recorded
    /// operation at most once, in reverse execution order. A tape can be
    /// walked backward only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.consumed {
            return Err(NdError::TapeConsumed);
        }
        let lt = &self.nodes[loss.index].tensor;
        if lt.numel() != 1 {
            return Err(NdError::NonScalarLoss { shape: lt.shape().to_vec() });
        }
        self.consumed = true;
        self.nodes[loss.index].tensor.grad_mut()[0] = 1.0;

        for i in (0..=loss.index).rev() {
            let grad = match self.nodes[i].tensor.grad() {
                Some(g) => g.to_vec(),
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = (self.nodes[a].tensor.rows(), self.nodes[a].tensor.cols());
                    let n = self.nodes[b].tensor.cols();
                    let adata = self.nodes[a].tensor.data().to_vec();
                    let bdata = self.nodes[b].tensor.data().to_vec();
                    // dA = dY · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i2 in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grad[i2 * n + j] * bdata[p * n + j];
                            }
                            da[i2 * k + p] = s;
                        }
                    }
                    // dB = Aᵀ · dY
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for i2 in 0..m {
                            let av = adata[i2 * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += av * grad[i2 * n + j];
                            }
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Transpose { x } => {
                    let (r, c) = (self.nodes[x].tensor.rows(), self.nodes[x].tensor.cols());
                    let mut dx = vec![0.0; r * c];
                    for i2 in 0..r {
                        for j in 0..c {
                            dx[i2 * c + j] = grad[j * r + i2];
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::Add { a, b } => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &grad);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[b].tensor.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[a].tensor.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::ScaleVar { x, s } => {
                    let sv = self.nodes[s].tensor.data()[0];
                    let dx: Vec<f64> = grad.iter().map(|g| g * sv).collect();
                    let ds: f64 = grad
                        .iter()
                        .zip(self.nodes[x].tensor.data())
                        .map(|(g, v)| g * v)
                        .sum();
                    self.accumulate(x, &dx);
                    self.accumulate(s, &[ds]);
                }
                Op::ScaleConst { x, c } => {
                    let dx: Vec<f64> = grad.iter().map(|g| g * c).collect();
                    self.accumulate(x, &dx);
                }
                Op::Relu { x } => {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[x].tensor.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Sigmoid { x } => {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[i].tensor.data())
                        .map(|(g, &y)| g * y * (1.0 - y))
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Tanh { x } => {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[i].tensor.data())
                        .map(|(g, &y)| g * (1.0 - y * y))
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Conv1d { input, kernel, bias, width, pad_left } => {
                    let ti = &self.nodes[input].tensor;
                    let (d_in, n) = (ti.rows(), ti.cols());
                    let channels = self.nodes[bias].tensor.numel();
                    let inp = ti.data().to_vec();
                    let ker = self.nodes[kernel].tensor.data().to_vec();
                    let mut dinp = vec![0.0; d_in * n];
                    let mut dker = vec![0.0; width * d_in * channels];
                    let mut dbias = vec![0.0; channels];
                    for c in 0..channels {
                        for j in 0..n {
                            let g = grad[c * n + j];
                            if g == 0.0 {
                                continue;
                            }
                            dbias[c] += g;
                            for t in 0..width {
                                let pos = j as isize + t as isize - pad_left as isize;
                                if pos < 0 || pos >= n as isize {
                                    continue;
                                }
                                let pos = pos as usize;
                                for d in 0..d_in {
                                    dker[t * d_in * channels + d * channels + c] +=
                                        g * inp[d * n + pos];
                                    dinp[d * n + pos] += g * ker[t * d_in * channels + d * channels + c];
                                }
                            }
                        }
                    }
                    self.accumulate(input, &dinp);
                    self.accumulate(kernel, &dker);
                    self.accumulate(bias, &dbias);
                }
                Op::SoftmaxMasked { logits, mask } => {
                    let last = mask.len();
                    let rows = grad.len() / last;
                    let y = self.nodes[i].tensor.data().to_vec();
                    let mut dx = vec![0.0; grad.len()];
                    for r in 0..rows {
                        let base = r * last;
                        let mut dot = 0.0;
                        for j in 0..last {
                            if mask[j] {
                                dot += y[base + j] * grad[base + j];
                            }
                        }
                        for j in 0..last {
                            if mask[j] {
                                dx[base + j] = y[base + j] * (grad[base + j] - dot);
                            }
                        }
                    }
                    self.accumulate(logits, &dx);
                }
                Op::Dropout { x, keep } => {
                    let dx: Vec<f64> = grad.iter().zip(&keep).map(|(g, k)| g * k).collect();
                    self.accumulate(x, &dx);
                }
                Op::BatchNorm { x, scale, shift, saved } => {
                    let tx = &self.nodes[x].tensor;
                    let (c, n) = (tx.rows(), tx.cols());
                    let xd = tx.data().to_vec();
                    let sc = self.nodes[scale].tensor.data().to_vec();
                    let mut dx = vec![0.0; c * n];
                    let mut dscale = vec![0.0; c];
                    let mut dshift = vec![0.0; c];
                    for ch in 0..c {
                        let mu = saved.mean[ch];
                        let istd = saved.inv_std[ch];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xc = 0.0;
                        for j in 0..n {
                            let g = grad[ch * n + j];
                            let xc = xd[ch * n + j] - mu;
                            dshift[ch] += g;
                            dscale[ch] += g * xc * istd;
                            let dxhat = g * sc[ch];
                            sum_dxhat += dxhat;
                            sum_dxhat_xc += dxhat * xc;
                            dx[ch * n + j] = dxhat * istd;
                        }
                        if !saved.eval {
                            // statistics terms flow only into the columns
                            // that defined the batch mean and variance
                            let dvar = sum_dxhat_xc * (-0.5) * istd.powi(3);
                            let dmean = -istd * sum_dxhat;
                            let inv_count = 1.0 / saved.count;
                            for j in 0..n {
                                let in_stats = saved.mask.as_ref().map_or(true, |m| m[j]);
                                if in_stats {
                                    let xc = xd[ch * n + j] - mu;
                                    dx[ch * n + j] += dvar * 2.0 * xc * inv_count + dmean * inv_count;
                                }
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(scale, &dscale);
                    self.accumulate(shift, &dshift);
                }
                Op::MaskedMeanCols { x, mask, count } => {
                    let n = mask.len();
                    let c = grad.len();
                    let inv = 1.0 / count as f64;
                    let mut dx = vec![0.0; c * n];
                    for ch in 0..c {
                        for (j, &keep) in mask.iter().enumerate() {
                            if keep {
                                dx[ch * n + j] = grad[ch] * inv;
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::BroadcastCols { x } => {
                    let c = self.nodes[x].tensor.rows();
                    let n = grad.len() / c;
                    let mut dx = vec![0.0; c];
                    for ch in 0..c {
                        for j in 0..n {
                            dx[ch] += grad[ch * n + j];
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::ConcatRows { parts } => {
                    let cols = self.nodes[i].tensor.cols();
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.nodes[p].tensor.rows();
                        let dp = grad[offset * cols..(offset + rows) * cols].to_vec();
                        self.accumulate(p, &dp);
                        offset += rows;
                    }
                }
                Op::ConcatCols { parts } => {
                    let cols = self.nodes[i].tensor.cols();
                    let rows = self.nodes[i].tensor.rows();
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p].tensor.cols();
                        let mut dp = vec![0.0; rows * pc];
                        for r in 0..rows {
                            dp[r * pc..(r + 1) * pc]
                                .copy_from_slice(&grad[r * cols + offset..r * cols + offset + pc]);
                        }
                        self.accumulate(p, &dp);
                        offset += pc;
                    }
                }
                Op::SliceCols { x, start } => {
                    let (r, c) = (self.nodes[x].tensor.rows(), self.nodes[x].tensor.cols());
                    let len = grad.len() / r;
                    let mut dx = vec![0.0; r * c];
                    for row in 0..r {
                        dx[row * c + start..row * c + start + len]
                            .copy_from_slice(&grad[row * len..(row + 1) * len]);
                    }
                    self.accumulate(x, &dx);
                }
                Op::SliceRows { x, start } => {
                    let (r, c) = (self.nodes[x].tensor.rows(), self.nodes[x].tensor.cols());
                    let len = grad.len() / c;
                    let mut dx = vec![0.0; r * c];
                    dx[start * c..(start + len) * c].copy_from_slice(&grad);
                    self.accumulate(x, &dx);
                }
                Op::SelectRow { table, row } => {
                    let (v, e) = (self.nodes[table].tensor.rows(), self.nodes[table].tensor.cols());
                    let mut dt = vec![0.0; v * e];
                    dt[row * e..(row + 1) * e].copy_from_slice(&grad);
                    self.accumulate(table, &dt);
                }
                Op::SumAll { x } => {
                    let dx = vec![grad[0]; self.nodes[x].tensor.numel()];
                    self.accumulate(x, &dx);
                }
                Op::Mse { pred, target } => {
                    let n = self.nodes[pred].tensor.numel() as f64;
                    let coeff = 2.0 * grad[0] / n;
                    let dp: Vec<f64> = self.nodes[pred]
                        .tensor
                        .data()
                        .iter()
                        .zip(self.nodes[target].tensor.data())
                        .map(|(p, t)| coeff * (p - t))
                        .collect();
                    let dt: Vec<f64> = dp.iter().map(|v| -v).collect();
                    self.accumulate(pred, &dp);
                    self.accumulate(target, &dt);
                }
                Op::Cce { pred, target } => {
                    let g = grad[0];
                    let dp: Vec<f64> = self.nodes[pred]
                        .tensor
                        .data()
                        .iter()
                        .zip(self.nodes[target].tensor.data())
                        .map(|(&p, &t)| if p > CCE_CLAMP { -g * t / p } else { 0.0 })
                        .collect();
                    let dt: Vec<f64> = self.nodes[pred]
                        .tensor
                        .data()
                        .iter()
                        .map(|&p| -g * p.max(CCE_CLAMP).ln())
                        .collect();
                    self.accumulate(pred, &dp);
                    self.accumulate(target, &dt);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, index: usize, delta: &[f64]) {
        let g = self.nodes[index].tensor.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}
