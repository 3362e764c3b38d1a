//! Output heads, constrained span decoding, top-K candidates and shared-norm
//! decoding across paragraphs.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::params::Head;
use crate::tensor::{axpy, dot, gemm_nn_acc, outer_acc, softmax, softmax_backward, Mat};

/// Start/end distributions over context rows, with the logits they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanDistribution {
    pub start_logits: Vec<f64>,
    pub end_logits: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Original token index of every row.
    pub positions: Vec<usize>,
}

impl SpanDistribution {
    pub fn from_logits(start_logits: Vec<f64>, end_logits: Vec<f64>, positions: Vec<usize>) -> Self {
        let start = softmax(&start_logits);
        let end = softmax(&end_logits);
        SpanDistribution { start_logits, end_logits, start, end, positions }
    }

    /// Builds a distribution straight from probabilities (logits set to `ln p`).
    pub fn from_probs(start: Vec<f64>, end: Vec<f64>) -> Self {
        let positions = (0..start.len()).collect();
        SpanDistribution {
            start_logits: start.iter().map(|&p| libm::log(p)).collect(),
            end_logits: end.iter().map(|&p| libm::log(p)).collect(),
            start,
            end,
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A span in original token indices with its joint probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanScore {
    pub b: usize,
    pub e: usize,
    pub score: f64,
}

/// Head activations kept for the backward pass.
#[derive(Debug, Clone)]
pub enum HeadCache {
    Independent,
    Conditional {
        alpha: Vec<f64>,
        q_summary: Vec<f64>,
        start_key: Vec<f64>,
        joined: Vec<f64>,
        q_updated: Vec<f64>,
        end_key: Vec<f64>,
    },
}

pub fn head_forward(head: &Head, q: &Mat, c: &Mat, positions: Vec<usize>) -> Result<(SpanDistribution, HeadCache)> {
    if c.rows() == 0 {
        return Err(Error::Empty("context"));
    }
    match head {
        Head::Independent { w_start, w_end } => {
            let s = c.matvec(w_start.as_slice());
            let e = c.matvec(w_end.as_slice());
            Ok((SpanDistribution::from_logits(s, e, positions), HeadCache::Independent))
        }
        Head::Conditional { w_query, w_start, w_end, w_update } => {
            if q.rows() == 0 {
                return Err(Error::Empty("question"));
            }
            let alpha = softmax(&q.matvec(w_query.as_slice()));
            let q_summary = q.vecmat(&alpha);
            let start_key = w_start.matvec(&q_summary);
            let s = c.matvec(&start_key);
            let ps = softmax(&s);
            let v = c.vecmat(&ps);
            let mut joined = q_summary.clone();
            joined.extend_from_slice(&v);
            let q_updated: Vec<f64> = w_update.vecmat(&joined).into_iter().map(libm::tanh).collect();
            let end_key = w_end.matvec(&q_updated);
            let e = c.matvec(&end_key);
            let pe = softmax(&e);
            let dist = SpanDistribution { start_logits: s, end_logits: e, start: ps, end: pe, positions };
            Ok((dist, HeadCache::Conditional { alpha, q_summary, start_key, joined, q_updated, end_key }))
        }
    }
}

/// Backward pass of a head given gradients on its start and end logits.
/// Accumulates into `grad` and returns `(dL/dQ, dL/dC)`.
pub fn head_backward(
    head: &Head,
    grad: &mut Head,
    cache: &HeadCache,
    q: &Mat,
    c: &Mat,
    dist: &SpanDistribution,
    d_start: &[f64],
    d_end: &[f64],
) -> (Mat, Mat) {
    let d = c.cols();
    let mut dq = Mat::zeros(q.rows(), d);
    let mut dc = Mat::zeros(c.rows(), d);
    match (head, grad, cache) {
        (Head::Independent { w_start, w_end }, Head::Independent { w_start: gs, w_end: ge }, _) => {
            outer_acc(&mut dc, d_start, w_start.as_slice());
            outer_acc(&mut dc, d_end, w_end.as_slice());
            axpy_rows(gs.as_mut_slice(), c, d_start);
            axpy_rows(ge.as_mut_slice(), c, d_end);
        }
        (
            Head::Conditional { w_query, w_start, w_end, w_update },
            Head::Conditional { w_query: g_query, w_start: g_start, w_end: g_end, w_update: g_update },
            HeadCache::Conditional { alpha, q_summary, start_key, joined, q_updated, end_key },
        ) => {
            // End logits e = C · end_key, end_key = W_end · q'.
            outer_acc(&mut dc, d_end, end_key);
            let d_end_key = c.vecmat(d_end);
            outer_acc(g_end, &d_end_key, q_updated);
            let mut d_q_updated = alloc::vec![0.0; d];
            for (j, &g) in d_end_key.iter().enumerate() {
                axpy(&mut d_q_updated, g, w_end.row(j));
            }
            // q' = tanh([q̃ ; v] · W_update).
            let dz: Vec<f64> = d_q_updated.iter().zip(q_updated).map(|(g, y)| g * (1.0 - y * y)).collect();
            outer_acc(g_update, joined, &dz);
            let d_joined = w_update.matvec(&dz);
            let (d_summary_from_update, dv) = d_joined.split_at(d);
            // v = Σ_b start[b] · C_b.
            outer_acc(&mut dc, &dist.start, dv);
            let d_ps: Vec<f64> = (0..c.rows()).map(|b| dot(c.row(b), dv)).collect();
            let mut ds = softmax_backward(&dist.start, &d_ps);
            for (a, b) in ds.iter_mut().zip(d_start) {
                *a += b;
            }
            // Start logits s = C · start_key, start_key = W_start · q̃.
            outer_acc(&mut dc, &ds, start_key);
            let d_start_key = c.vecmat(&ds);
            outer_acc(g_start, &d_start_key, q_summary);
            let mut d_summary = d_summary_from_update.to_vec();
            for (j, &g) in d_start_key.iter().enumerate() {
                axpy(&mut d_summary, g, w_start.row(j));
            }
            // q̃ = Σ_j alpha_j Q_j, alpha = softmax(Q · w_query).
            outer_acc(&mut dq, alpha, &d_summary);
            let d_alpha: Vec<f64> = (0..q.rows()).map(|j| dot(q.row(j), &d_summary)).collect();
            let da = softmax_backward(alpha, &d_alpha);
            outer_acc(&mut dq, &da, w_query.as_slice());
            axpy_rows(g_query.as_mut_slice(), q, &da);
        }
        _ => unreachable!("gradient head does not match parameter head"),
    }
    (dq, dc)
}

/// `out += Σ_i w_i · m_i`.
fn axpy_rows(out: &mut [f64], m: &Mat, w: &[f64]) {
    let mut tmp = Mat::from_vec(1, out.len(), out.to_vec());
    let wm = Mat::from_vec(1, w.len(), w.to_vec());
    gemm_nn_acc(&mut tmp, &wm, m);
    out.copy_from_slice(tmp.as_slice());
}

/// Independent head: `softmax(C·w_s)`, `softmax(C·w_e)`.
pub fn output_independent(head: &Head, c: &Mat, positions: Vec<usize>) -> Result<SpanDistribution> {
    match head {
        Head::Independent { .. } => Ok(head_forward(head, &Mat::zeros(0, c.cols()), c, positions)?.0),
        Head::Conditional { .. } => Err(Error::Config("expected an independent head".into())),
    }
}

/// Conditional head: the end scorer sees the start-weighted context summary.
pub fn output_conditional(head: &Head, q: &Mat, c: &Mat, positions: Vec<usize>) -> Result<SpanDistribution> {
    match head {
        Head::Conditional { .. } => Ok(head_forward(head, q, c, positions)?.0),
        Head::Independent { .. } => Err(Error::Config("expected a conditional head".into())),
    }
}

/// Visits every valid `(row_b, row_e)` pair in lexicographic order: spans
/// shorter than `l_max` that do not straddle a pruned gap.
fn for_each_span(positions: &[usize], l_max: usize, mut f: impl FnMut(usize, usize)) {
    let n = positions.len();
    for i in 0..n {
        for j in i..n.min(i + l_max) {
            if positions[j] - positions[i] != j - i {
                break;
            }
            f(i, j);
        }
    }
}

/// Highest joint-probability span with `e - b < l_max`; ties go to the smaller
/// `b`, then the smaller `e`.
pub fn decode_span(dist: &SpanDistribution, l_max: usize) -> Option<SpanScore> {
    let mut best: Option<(usize, usize, f64)> = None;
    for_each_span(&dist.positions, l_max, |i, j| {
        let s = dist.start[i] * dist.end[j];
        if best.is_none_or(|(_, _, b)| s > b) {
            best = Some((i, j, s));
        }
    });
    best.map(|(i, j, score)| SpanScore { b: dist.positions[i], e: dist.positions[j], score })
}

fn rank_order(a: &SpanScore, b: &SpanScore) -> Ordering {
    b.score.total_cmp(&a.score).then(a.b.cmp(&b.b)).then(a.e.cmp(&b.e))
}

/// The `k` best valid spans, best first, using the same order as
/// [`decode_span`]. Overlapping spans are allowed.
pub fn top_k_candidates(dist: &SpanDistribution, k: usize, l_max: usize) -> Vec<SpanScore> {
    let mut all = Vec::new();
    for_each_span(&dist.positions, l_max, |i, j| {
        all.push(SpanScore { b: dist.positions[i], e: dist.positions[j], score: dist.start[i] * dist.end[j] });
    });
    if k < all.len() {
        all.select_nth_unstable_by(k, rank_order);
        all.truncate(k);
    }
    all.sort_by(rank_order);
    all
}

/// Normalizes start and end logits jointly over all paragraphs, then decodes
/// the best span that stays inside one paragraph. Returns the index into
/// `dists` with the span. Ties go to the lowest `(paragraph, b, e)`.
pub fn shared_norm_decode(dists: &[SpanDistribution], l_max: usize) -> Result<(usize, SpanScore)> {
    let start_logits: Vec<f64> = dists.iter().flat_map(|d| d.start_logits.iter().copied()).collect();
    let end_logits: Vec<f64> = dists.iter().flat_map(|d| d.end_logits.iter().copied()).collect();
    if start_logits.is_empty() {
        return Err(Error::Empty("paragraph set"));
    }
    let start = softmax(&start_logits);
    let end = softmax(&end_logits);
    let mut offset = 0;
    let mut best: Option<(usize, SpanScore)> = None;
    for (p, d) in dists.iter().enumerate() {
        let n = d.len();
        let joint = SpanDistribution {
            start_logits: Vec::new(),
            end_logits: Vec::new(),
            start: start[offset..offset + n].to_vec(),
            end: end[offset..offset + n].to_vec(),
            positions: d.positions.clone(),
        };
        offset += n;
        if let Some(s) = decode_span(&joint, l_max) {
            if best.is_none_or(|(_, b)| s.score > b.score) {
                best = Some((p, s));
            }
        }
    }
    best.ok_or(Error::Empty("paragraph set"))
}
