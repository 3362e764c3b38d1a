//! Joint training of the triage and final heads on golden paragraphs.
//!
//! Both heads see the full, unpruned paragraph and the loss is the sum of
//! their start/end negative log-likelihoods. Gradients are derived by hand
//! through every block; `grad` is checked against central finite differences
//! in the test suite.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::corpus::QASample;
use crate::encoder::{interaction_backward, interaction_forward, recurrent_backward, recurrent_forward, token_ids, InteractionCache, RecurrentCache};
use crate::error::{Error, Result};
use crate::params::{Head, Parameters};
use crate::spanner::{head_backward, head_forward, HeadCache, SpanDistribution};
use crate::tensor::{axpy, dot, Mat};
use crate::text::TokenizedText;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub nll_tri: f64,
    pub nll_model: f64,
    pub total: f64,
}

impl LossReport {
    fn new(nll_tri: f64, nll_model: f64) -> Self {
        LossReport { nll_tri, nll_model, total: nll_tri + nll_model }
    }

    pub fn is_finite(&self) -> bool {
        self.nll_tri.is_finite() && self.nll_model.is_finite()
    }
}

/// A training example resolved to token ids and a gold span.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub question: TokenizedText,
    pub context: TokenizedText,
    pub start: usize,
    pub end: usize,
}

impl Example {
    pub fn from_sample(sample: &QASample) -> Option<Example> {
        let (para, gold) = sample.training_target()?;
        Some(Example {
            id: sample.id.clone(),
            question: sample.question.clone(),
            context: para.clone(),
            start: gold.token_start,
            end: gold.token_end,
        })
    }
}

struct HeadRun {
    dist: SpanDistribution,
    cache: HeadCache,
}

struct Tape {
    q_ids: Vec<usize>,
    c_ids: Vec<usize>,
    /// `Q^0..=Q^L` and `C^0..=C^L`.
    q_feats: Vec<Mat>,
    c_feats: Vec<Mat>,
    q_caches: Vec<RecurrentCache>,
    c_caches: Vec<RecurrentCache>,
    interaction: Option<InteractionCache>,
    triage: HeadRun,
    model: HeadRun,
}

fn forward_tape(params: &Parameters, config: &ModelConfig, ex: &Example) -> Result<Tape> {
    let len = ex.context.len();
    if ex.start > ex.end || ex.end >= len {
        return Err(Error::GoldOutOfRange { start: ex.start, end: ex.end, len });
    }
    let q_ids = token_ids(params, &ex.question);
    let c_ids = token_ids(params, &ex.context);
    let mut q = params.embedding.select_rows(&q_ids);
    let mut c = params.embedding.select_rows(&c_ids);
    let mut q_feats = alloc::vec![q.clone()];
    let mut c_feats = alloc::vec![c.clone()];
    let mut q_caches = Vec::new();
    let mut c_caches = Vec::new();
    let mut interaction = None;
    for i in 0..params.layers() {
        if i + 1 == config.triage_layer {
            let (mixed, cache) = interaction_forward(&params.interaction, &c, &q)?;
            c = mixed;
            interaction = Some(cache);
        }
        let (c_next, cc) = recurrent_forward(&params.context_layers[i], &c)?;
        let (q_next, qc) = recurrent_forward(&params.question_layers[i], &q)?;
        c = c_next;
        q = q_next;
        q_feats.push(q.clone());
        c_feats.push(c.clone());
        q_caches.push(qc);
        c_caches.push(cc);
    }
    let positions: Vec<usize> = (0..len).collect();
    let t = config.triage_layer;
    let (dist, cache) = head_forward(params.triage(), &q_feats[t], &c_feats[t], positions.clone())?;
    let triage = HeadRun { dist, cache };
    let (dist, cache) = head_forward(&params.model_head, &q, &c, positions)?;
    let model = HeadRun { dist, cache };
    Ok(Tape { q_ids, c_ids, q_feats, c_feats, q_caches, c_caches, interaction, triage, model })
}

fn log_softmax_at(logits: &[f64], i: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
    logits[i] - lse
}

fn nll(dist: &SpanDistribution, b: usize, e: usize) -> f64 {
    -log_softmax_at(&dist.start_logits, b) - log_softmax_at(&dist.end_logits, e)
}

/// `p - onehot(i)`: gradient of `-ln softmax(z)_i` with respect to `z`.
fn nll_grad(p: &[f64], i: usize) -> Vec<f64> {
    let mut g = p.to_vec();
    g[i] -= 1.0;
    g
}

pub fn example_loss(params: &Parameters, config: &ModelConfig, ex: &Example) -> Result<LossReport> {
    let tape = forward_tape(params, config, ex)?;
    Ok(LossReport::new(nll(&tape.triage.dist, ex.start, ex.end), nll(&tape.model.dist, ex.start, ex.end)))
}

fn scatter_rows(table: &mut Mat, ids: &[usize], grads: &Mat) {
    for (r, &id) in ids.iter().enumerate() {
        axpy(table.row_mut(id), 1.0, grads.row(r));
    }
}

/// Loss and the gradient of the total loss with respect to every parameter.
pub fn example_grad(params: &Parameters, config: &ModelConfig, ex: &Example) -> Result<(LossReport, Parameters)> {
    let mut grad = params.zeros_like();
    let (report, _) = accumulate_grad(params, config, ex, &mut grad)?;
    Ok((report, grad))
}

/// Adds the example's gradient into `grad` and returns the embedding rows
/// it touched.
fn accumulate_grad(
    params: &Parameters,
    config: &ModelConfig,
    ex: &Example,
    grad: &mut Parameters,
) -> Result<(LossReport, Vec<usize>)> {
    let tape = forward_tape(params, config, ex)?;
    let report = LossReport::new(nll(&tape.triage.dist, ex.start, ex.end), nll(&tape.model.dist, ex.start, ex.end));
    let layers = params.layers();
    let t = config.triage_layer;

    let (mut dq, mut dc) = head_backward(
        &params.model_head,
        &mut grad.model_head,
        &tape.model.cache,
        &tape.q_feats[layers],
        &tape.c_feats[layers],
        &tape.model.dist,
        &nll_grad(&tape.model.dist.start, ex.start),
        &nll_grad(&tape.model.dist.end, ex.end),
    );
    let tri_grad: &mut Head = match grad.triage_head.as_mut() {
        Some(h) => h,
        None => &mut grad.model_head,
    };
    let (dq_tri, dc_tri) = head_backward(
        params.triage(),
        tri_grad,
        &tape.triage.cache,
        &tape.q_feats[t],
        &tape.c_feats[t],
        &tape.triage.dist,
        &nll_grad(&tape.triage.dist.start, ex.start),
        &nll_grad(&tape.triage.dist.end, ex.end),
    );

    for i in (0..layers).rev() {
        if i + 1 == t {
            dq.add_assign(&dq_tri);
            dc.add_assign(&dc_tri);
        }
        let dc_in = recurrent_backward(&params.context_layers[i], &mut grad.context_layers[i], &tape.c_caches[i], &dc);
        dq = recurrent_backward(&params.question_layers[i], &mut grad.question_layers[i], &tape.q_caches[i], &dq);
        dc = match (&tape.interaction, i + 1 == t) {
            (Some(cache), true) => {
                let (dc_prev, dq_extra) = interaction_backward(&params.interaction, &mut grad.interaction, cache, &dc_in);
                dq.add_assign(&dq_extra);
                dc_prev
            }
            _ => dc_in,
        };
    }
    scatter_rows(&mut grad.embedding, &tape.c_ids, &dc);
    scatter_rows(&mut grad.embedding, &tape.q_ids, &dq);
    let mut touched = tape.c_ids;
    touched.extend_from_slice(&tape.q_ids);
    touched.sort_unstable();
    touched.dedup();
    Ok((report, touched))
}

/// `params -= step · grad`, then clears `grad`. Only the touched embedding
/// rows are visited.
fn apply_step(params: &mut Parameters, grad: &mut Parameters, touched: &[usize], step_size: f64) {
    for &id in touched {
        let g = grad.embedding.row_mut(id);
        axpy(params.embedding.row_mut(id), -step_size, g);
        g.fill(0.0);
    }
    let dense = params.tensors_mut().into_iter().zip(grad.tensors_mut()).skip(1);
    for ((_, p), (_, g)) in dense {
        axpy(p.as_mut_slice(), -step_size, g.as_slice());
        g.as_mut_slice().fill(0.0);
    }
}

/// Euclidean norm of `grad`, reading only the touched embedding rows.
fn grad_norm(grad: &Parameters, touched: &[usize]) -> f64 {
    let rows: f64 = touched.iter().map(|&id| dot(grad.embedding.row(id), grad.embedding.row(id))).sum();
    let dense: f64 = grad.tensors().into_iter().skip(1).map(|(_, g)| dot(g.as_slice(), g.as_slice())).sum();
    libm::sqrt(rows + dense)
}

/// Joint loss of both heads on the sample's golden paragraph.
pub fn joint_loss(params: &Parameters, config: &ModelConfig, sample: &QASample) -> Result<LossReport> {
    example_loss(params, config, &example_of(sample)?)
}

pub fn grad(params: &Parameters, config: &ModelConfig, sample: &QASample) -> Result<(LossReport, Parameters)> {
    example_grad(params, config, &example_of(sample)?)
}

fn example_of(sample: &QASample) -> Result<Example> {
    let ex = Example::from_sample(sample).ok_or(Error::Empty("golden paragraph"))?;
    Ok(ex)
}

/// Mean losses of one epoch.
pub type EpochTrace = Vec<LossReport>;

/// Plain per-sample gradient descent over a seeded shuffle of the corpus.
pub fn train(
    params: &Parameters,
    config: &ModelConfig,
    corpus: &[QASample],
    epochs: usize,
    step_size: f64,
) -> Result<(Parameters, EpochTrace)> {
    train_with(params, config, corpus, epochs, Sgd::plain(step_size), |_, _| {})
}

/// Step size, plus an optional cap on the per-sample gradient norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub step_size: f64,
    pub max_grad_norm: Option<f64>,
}

impl Sgd {
    pub fn plain(step_size: f64) -> Self {
        Sgd { step_size, max_grad_norm: None }
    }

    pub fn clipped(step_size: f64, max_grad_norm: f64) -> Self {
        Sgd { step_size, max_grad_norm: Some(max_grad_norm) }
    }

    fn step_for(&self, norm: f64) -> f64 {
        match self.max_grad_norm {
            Some(cap) if norm > cap => self.step_size * cap / norm,
            _ => self.step_size,
        }
    }
}

/// [`train`] with clipping and a callback after every epoch.
pub fn train_with(
    params: &Parameters,
    config: &ModelConfig,
    corpus: &[QASample],
    epochs: usize,
    sgd: Sgd,
    mut on_epoch: impl FnMut(usize, &LossReport),
) -> Result<(Parameters, EpochTrace)> {
    let examples: Vec<Example> = corpus.iter().filter_map(Example::from_sample).collect();
    let mut params = params.clone();
    let mut grad = params.zeros_like();
    let mut trace = Vec::with_capacity(epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sum = LossReport::default();
        for &i in &order {
            let ex = &examples[i];
            let (report, touched) = accumulate_grad(&params, config, ex, &mut grad)?;
            if !report.is_finite() {
                return Err(Error::NonFiniteLoss { sample: ex.id.clone() });
            }
            let step = match sgd.max_grad_norm {
                Some(_) => sgd.step_for(grad_norm(&grad, &touched)),
                None => sgd.step_size,
            };
            apply_step(&mut params, &mut grad, &touched, step);
            sum.nll_tri += report.nll_tri;
            sum.nll_model += report.nll_model;
        }
        let n = examples.len().max(1) as f64;
        let mean = LossReport::new(sum.nll_tri / n, sum.nll_model / n);
        on_epoch(epoch, &mean);
        trace.push(mean);
    }
    Ok((params, trace))
}
