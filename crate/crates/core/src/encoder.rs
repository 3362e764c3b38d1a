//! Reference encoder: hashed embeddings, bidirectional gated recurrent
//! blocks and one context-to-question attention block.
//!
//! Each block has a cached forward pass (used by training) and a matching
//! backward pass. The inference entry points call the same forward code and
//! discard the caches, so training and inference see identical numbers.

use alloc::vec::Vec;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{Direction, Parameters, RecurrentLayer};
use crate::tensor::{gemm_nn_acc, gemm_nt_acc, gemm_tn_acc, sigmoid, softmax, softmax_backward, Mat};
use crate::text::TokenizedText;

/// Per-token features plus the original token index of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub matrix: Mat,
    pub positions: Vec<usize>,
}

impl FeatureSequence {
    pub fn new(matrix: Mat) -> Self {
        let positions = (0..matrix.rows()).collect();
        FeatureSequence { matrix, positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn width(&self) -> usize {
        self.matrix.cols()
    }

    /// Keeps the rows at the given row indices, carrying their positions along.
    pub fn select(&self, rows: &[usize]) -> FeatureSequence {
        FeatureSequence {
            matrix: self.matrix.select_rows(rows),
            positions: rows.iter().map(|&r| self.positions[r]).collect(),
        }
    }
}

const HASH_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const HASH_BASE: u64 = 0x0000_0100_0000_01b3;

/// Embedding bucket of a normalized token:
/// `h = OFFSET; for byte b: h = h * BASE + b (mod 2^64)`, then `h mod vocab_size`.
pub fn token_bucket(norm: &str, vocab_size: usize) -> usize {
    let h = norm
        .bytes()
        .fold(HASH_OFFSET, |h, b| h.wrapping_mul(HASH_BASE).wrapping_add(u64::from(b)));
    (h % vocab_size as u64) as usize
}

pub fn token_ids(params: &Parameters, text: &TokenizedText) -> Vec<usize> {
    text.norms().map(|n| token_bucket(n, params.vocab_size)).collect()
}

pub fn embed_ids(params: &Parameters, ids: &[usize]) -> FeatureSequence {
    FeatureSequence::new(params.embedding.select_rows(ids))
}

pub fn embed(params: &Parameters, text: &TokenizedText) -> FeatureSequence {
    embed_ids(params, &token_ids(params, text))
}

/// Activations of one scan direction.
#[derive(Debug, Clone)]
pub struct DirectionCache {
    u: Mat,
    f: Mat,
    r: Mat,
    c: Mat,
    tanh_c: Mat,
}

#[derive(Debug, Clone)]
pub struct RecurrentCache {
    x: Mat,
    h: Mat,
    fwd: DirectionCache,
    bwd: DirectionCache,
}

fn affine(x: &Mat, w: &Mat, b: Option<&Mat>) -> Mat {
    let mut out = Mat::zeros(x.rows(), w.cols());
    if let Some(b) = b {
        for i in 0..out.rows() {
            out.row_mut(i).copy_from_slice(b.as_slice());
        }
    }
    gemm_nn_acc(&mut out, x, w);
    out
}

fn scan(dir: &Direction, x: &Mat, reverse: bool) -> (Mat, DirectionCache) {
    let (n, d) = (x.rows(), x.cols());
    let u = affine(x, &dir.w, None);
    let mut f = affine(x, &dir.wf, Some(&dir.bf));
    let mut r = affine(x, &dir.wr, Some(&dir.br));
    for v in f.as_mut_slice().iter_mut().chain(r.as_mut_slice()) {
        *v = sigmoid(*v);
    }
    let mut c = Mat::zeros(n, d);
    let mut tanh_c = Mat::zeros(n, d);
    let mut h = Mat::zeros(n, d);
    let mut prev = alloc::vec![0.0; d];
    for step in 0..n {
        let t = if reverse { n - 1 - step } else { step };
        let (ft, rt, ut, xt) = (f.row(t), r.row(t), u.row(t), x.row(t));
        let ct = c.row_mut(t);
        for j in 0..d {
            ct[j] = ft[j] * prev[j] + (1.0 - ft[j]) * ut[j];
        }
        prev.copy_from_slice(ct);
        let tc = tanh_c.row_mut(t);
        for j in 0..d {
            tc[j] = libm::tanh(prev[j]);
        }
        let ht = h.row_mut(t);
        for j in 0..d {
            ht[j] = rt[j] * tc[j] + (1.0 - rt[j]) * xt[j];
        }
    }
    (h, DirectionCache { u, f, r, c, tanh_c })
}

/// Runs both scan directions and returns the raw per-direction outputs.
pub fn direction_outputs(layer: &RecurrentLayer, x: &Mat) -> (Mat, Mat) {
    (scan(&layer.fwd, x, false).0, scan(&layer.bwd, x, true).0)
}

pub fn recurrent_forward(layer: &RecurrentLayer, x: &Mat) -> Result<(Mat, RecurrentCache)> {
    let d = layer.proj.cols();
    if x.cols() != d {
        return Err(Error::WidthMismatch { expected: d, got: x.cols() });
    }
    let (hf, fwd) = scan(&layer.fwd, x, false);
    let (hb, bwd) = scan(&layer.bwd, x, true);
    let h = hf.hconcat(&hb);
    let y = h.matmul(&layer.proj);
    Ok((y, RecurrentCache { x: x.clone(), h, fwd, bwd }))
}

fn scan_backward(dir: &Direction, grad: &mut Direction, x: &Mat, cache: &DirectionCache, dh: &Mat, reverse: bool, dx: &mut Mat) {
    let (n, d) = (x.rows(), x.cols());
    let mut du = Mat::zeros(n, d);
    let mut dzf = Mat::zeros(n, d);
    let mut dzr = Mat::zeros(n, d);
    let mut dc_next = alloc::vec![0.0; d];
    for step in 0..n {
        // Walk the scan in reverse.
        let t = if reverse { step } else { n - 1 - step };
        let prev_t = if reverse { t + 1 } else { t.wrapping_sub(1) };
        let has_prev = if reverse { t + 1 < n } else { t > 0 };
        let (ft, rt, ut, xt, tc) = (cache.f.row(t), cache.r.row(t), cache.u.row(t), x.row(t), cache.tanh_c.row(t));
        let dht = dh.row(t);
        let dxt = dx.row_mut(t);
        for j in 0..d {
            let dr = dht[j] * (tc[j] - xt[j]);
            dxt[j] += dht[j] * (1.0 - rt[j]);
            let dc = dc_next[j] + dht[j] * rt[j] * (1.0 - tc[j] * tc[j]);
            let c_prev = if has_prev { cache.c.get(prev_t, j) } else { 0.0 };
            let df = dc * (c_prev - ut[j]);
            du.row_mut(t)[j] = dc * (1.0 - ft[j]);
            dzf.row_mut(t)[j] = df * ft[j] * (1.0 - ft[j]);
            dzr.row_mut(t)[j] = dr * rt[j] * (1.0 - rt[j]);
            dc_next[j] = dc * ft[j];
        }
    }
    gemm_tn_acc(&mut grad.w, x, &du);
    gemm_tn_acc(&mut grad.wf, x, &dzf);
    gemm_tn_acc(&mut grad.wr, x, &dzr);
    for t in 0..n {
        for (b, g) in grad.bf.as_mut_slice().iter_mut().zip(dzf.row(t)) {
            *b += g;
        }
        for (b, g) in grad.br.as_mut_slice().iter_mut().zip(dzr.row(t)) {
            *b += g;
        }
    }
    gemm_nt_acc(dx, &du, &dir.w);
    gemm_nt_acc(dx, &dzf, &dir.wf);
    gemm_nt_acc(dx, &dzr, &dir.wr);
}

/// Accumulates parameter gradients into `grad` and returns `dL/dx`.
pub fn recurrent_backward(layer: &RecurrentLayer, grad: &mut RecurrentLayer, cache: &RecurrentCache, dy: &Mat) -> Mat {
    let d = layer.proj.cols();
    gemm_tn_acc(&mut grad.proj, &cache.h, dy);
    let mut dh = Mat::zeros(dy.rows(), 2 * d);
    gemm_nt_acc(&mut dh, dy, &layer.proj);
    let (dhf, dhb) = dh.hsplit(d);
    let mut dx = Mat::zeros(cache.x.rows(), d);
    scan_backward(&layer.fwd, &mut grad.fwd, &cache.x, &cache.fwd, &dhf, false, &mut dx);
    scan_backward(&layer.bwd, &mut grad.bwd, &cache.x, &cache.bwd, &dhb, true, &mut dx);
    dx
}

/// One gated bidirectional block over `x`; positions pass through unchanged.
pub fn recurrent_block(layer: &RecurrentLayer, x: &FeatureSequence) -> Result<FeatureSequence> {
    let (y, _) = recurrent_forward(layer, &x.matrix)?;
    Ok(FeatureSequence { matrix: y, positions: x.positions.clone() })
}

#[derive(Debug, Clone)]
pub struct InteractionCache {
    c: Mat,
    q: Mat,
    attn: Mat,
    joined: Mat,
}

pub fn interaction_forward(proj: &Mat, c: &Mat, q: &Mat) -> Result<(Mat, InteractionCache)> {
    if q.rows() == 0 {
        return Err(Error::Empty("question"));
    }
    let d = proj.cols();
    if c.cols() != d || q.cols() != d {
        return Err(Error::WidthMismatch { expected: d, got: if c.cols() != d { c.cols() } else { q.cols() } });
    }
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut attn = c.matmul_t(q);
    for i in 0..attn.rows() {
        let row = attn.row_mut(i);
        for v in row.iter_mut() {
            *v *= scale;
        }
        let p = softmax(row);
        row.copy_from_slice(&p);
    }
    let attended = attn.matmul(q);
    let joined = c.hconcat(&attended);
    let out = joined.matmul(proj);
    Ok((out, InteractionCache { c: c.clone(), q: q.clone(), attn, joined }))
}

/// Returns `(dL/dC, dL/dQ)` and accumulates into `grad_proj`.
pub fn interaction_backward(proj: &Mat, grad_proj: &mut Mat, cache: &InteractionCache, dout: &Mat) -> (Mat, Mat) {
    let d = proj.cols();
    let scale = 1.0 / libm::sqrt(d as f64);
    gemm_tn_acc(grad_proj, &cache.joined, dout);
    let mut djoined = Mat::zeros(dout.rows(), 2 * d);
    gemm_nt_acc(&mut djoined, dout, proj);
    let (mut dc, dm) = djoined.hsplit(d);
    let mut dq = Mat::zeros(cache.q.rows(), d);
    gemm_tn_acc(&mut dq, &cache.attn, &dm);
    let da = dm.matmul_t(&cache.q);
    let mut ds = Mat::zeros(da.rows(), da.cols());
    for i in 0..da.rows() {
        let g = softmax_backward(cache.attn.row(i), da.row(i));
        for (o, v) in ds.row_mut(i).iter_mut().zip(g) {
            *o = v * scale;
        }
    }
    gemm_nn_acc(&mut dc, &ds, &cache.q);
    gemm_tn_acc(&mut dq, &ds, &cache.c);
    (dc, dq)
}

/// Context-to-question attention: `[C ; softmax(C Qᵀ / sqrt(d)) Q] · W_p`.
pub fn interaction_block(params: &Parameters, c: &FeatureSequence, q: &FeatureSequence) -> Result<FeatureSequence> {
    let (m, _) = interaction_forward(&params.interaction, &c.matrix, &q.matrix)?;
    Ok(FeatureSequence { matrix: m, positions: c.positions.clone() })
}

/// Attention weights alone, for inspection and tests.
pub fn attention_weights(params: &Parameters, c: &Mat, q: &Mat) -> Result<Mat> {
    Ok(interaction_forward(&params.interaction, c, q)?.1.attn)
}

/// Applies layers `from..to` (0-based, exclusive end) to both streams. The
/// interaction block runs on the context stream right before layer
/// `config.triage_layer`.
pub fn forward_layers(
    params: &Parameters,
    config: &ModelConfig,
    mut q: FeatureSequence,
    mut c: FeatureSequence,
    from: usize,
    to: usize,
) -> Result<(FeatureSequence, FeatureSequence)> {
    for i in from..to {
        if i + 1 == config.triage_layer {
            c = interaction_block(params, &c, &q)?;
        }
        c = recurrent_block(&params.context_layers[i], &c)?;
        q = recurrent_block(&params.question_layers[i], &q)?;
    }
    Ok((q, c))
}

/// Embedding plus layers `1..=T`.
pub fn forward_prefix(
    params: &Parameters,
    config: &ModelConfig,
    question: &TokenizedText,
    context: &TokenizedText,
) -> Result<(FeatureSequence, FeatureSequence)> {
    let q = embed(params, question);
    let c = embed(params, context);
    forward_layers(params, config, q, c, 0, config.triage_layer)
}

/// Layers `T+1..=L` over possibly pruned context features.
pub fn forward_suffix(
    params: &Parameters,
    config: &ModelConfig,
    q_feat: FeatureSequence,
    c_feat: FeatureSequence,
) -> Result<(FeatureSequence, FeatureSequence)> {
    forward_layers(params, config, q_feat, c_feat, config.triage_layer, params.layers())
}

/// All `L` layers without pruning.
pub fn forward_full(
    params: &Parameters,
    config: &ModelConfig,
    question: &TokenizedText,
    context: &TokenizedText,
) -> Result<(FeatureSequence, FeatureSequence)> {
    let (q, c) = forward_prefix(params, config, question, context)?;
    forward_suffix(params, config, q, c)
}
