//! The triage stage and the end-to-end answer pipeline.
//!
//! Control flow: embed and run layers `1..=T`; score spans with the triage
//! head; return its best span when the confidence clears the threshold;
//! otherwise keep only the sentences holding the top `K` candidates and run
//! layers `T+1..=L` over those features before the final head decides.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{ModelConfig, Threshold};
use crate::encoder::{forward_prefix, forward_suffix, FeatureSequence};
use crate::error::{Error, Result};
use crate::params::{Head, Parameters};
use crate::ranker::TfidfIndex;
use crate::spanner::{decode_span, head_forward, shared_norm_decode, top_k_candidates, SpanDistribution, SpanScore};
use crate::text::TokenizedText;

#[derive(Debug, Clone, PartialEq)]
pub enum TriageDecision {
    Exit(SpanScore),
    Prune {
        /// Original positions that survive, strictly increasing.
        kept_positions: Vec<usize>,
        pruned: FeatureSequence,
        kept_sentences: Vec<usize>,
    },
}

/// Which head produced the final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Triage,
    Model,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Triage => "triage",
            Origin::Model => "model",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerStats {
    pub exited: bool,
    pub total_tokens: usize,
    /// Tokens that reached layers `T+1..=L` (0 on early exit).
    pub kept_tokens: usize,
    /// Confidence of the triage head's best span.
    pub triage_confidence: f64,
}

impl AnswerStats {
    pub fn kept_fraction(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.kept_tokens as f64 / self.total_tokens as f64
        }
    }

    /// Share of the context never processed by the deep layers.
    pub fn pruned_portion(&self) -> f64 {
        1.0 - self.kept_fraction()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub span: SpanScore,
    pub origin: Origin,
    pub stats: AnswerStats,
    /// Best span of the triage head, whether or not it was returned.
    pub triage_span: SpanScore,
    /// Distribution of the final head; `None` after an early exit.
    pub model_dist: Option<SpanDistribution>,
}

fn run_head(head: &Head, q: &FeatureSequence, c: &FeatureSequence) -> Result<SpanDistribution> {
    Ok(head_forward(head, &q.matrix, &c.matrix, c.positions.clone())?.0)
}

/// Triage head on layer-`T` features.
pub fn triage_answer(params: &Parameters, q_feat: &FeatureSequence, c_feat: &FeatureSequence) -> Result<SpanDistribution> {
    run_head(params.triage(), q_feat, c_feat)
}

/// Final head on layer-`L` features.
pub fn model_answer(params: &Parameters, q_feat: &FeatureSequence, c_feat: &FeatureSequence) -> Result<SpanDistribution> {
    run_head(&params.model_head, q_feat, c_feat)
}

/// The best span if its joint probability is strictly above `t`.
pub fn should_exit(dist: &SpanDistribution, t: Threshold, l_max: usize) -> Option<SpanScore> {
    decode_span(dist, l_max).filter(|s| t.passes(s.score))
}

/// Keeps every whole sentence that contains a token of one of the top `k`
/// candidates. `sentence_spans` are inclusive ranges over original positions.
pub fn context_prune(
    c_feat: &FeatureSequence,
    dist: &SpanDistribution,
    k: usize,
    l_max: usize,
    sentence_spans: &[(usize, usize)],
) -> TriageDecision {
    let sentence_of = |pos: usize| sentence_spans.partition_point(|&(_, last)| last < pos);
    let mut kept_sentences = BTreeSet::new();
    for cand in top_k_candidates(dist, k, l_max) {
        let (first, last) = (sentence_of(cand.b), sentence_of(cand.e));
        kept_sentences.extend(first..=last);
    }
    let kept_positions: BTreeSet<usize> = kept_sentences
        .iter()
        .filter_map(|&s| sentence_spans.get(s))
        .flat_map(|&(a, b)| a..=b)
        .collect();
    let rows: Vec<usize> = (0..c_feat.len()).filter(|&r| kept_positions.contains(&c_feat.positions[r])).collect();
    let pruned = c_feat.select(&rows);
    TriageDecision::Prune {
        kept_positions: pruned.positions.clone(),
        pruned,
        kept_sentences: kept_sentences.into_iter().collect(),
    }
}

/// Runs the cascade on one question/context pair.
pub fn answer_question(
    params: &Parameters,
    config: &ModelConfig,
    question: &TokenizedText,
    context: &TokenizedText,
) -> Result<Answer> {
    if context.is_empty() {
        return Err(Error::Empty("context"));
    }
    let (q_t, c_t) = forward_prefix(params, config, question, context)?;
    let tri = triage_answer(params, &q_t, &c_t)?;
    let triage_span = decode_span(&tri, config.l_max).ok_or(Error::Empty("context"))?;
    let total_tokens = context.len();
    if config.threshold.passes(triage_span.score) {
        return Ok(Answer {
            span: triage_span,
            origin: Origin::Triage,
            stats: AnswerStats { exited: true, total_tokens, kept_tokens: 0, triage_confidence: triage_span.score },
            triage_span,
            model_dist: None,
        });
    }
    let TriageDecision::Prune { pruned, .. } = context_prune(&c_t, &tri, config.k, config.l_max, &context.sentence_spans)
    else {
        unreachable!()
    };
    let kept_tokens = pruned.len();
    let (q_l, c_l) = forward_suffix(params, config, q_t, pruned)?;
    let dist = model_answer(params, &q_l, &c_l)?;
    let span = decode_final(config, context, &dist)?;
    Ok(Answer {
        span,
        origin: Origin::Model,
        stats: AnswerStats { exited: false, total_tokens, kept_tokens, triage_confidence: triage_span.score },
        triage_span,
        model_dist: Some(dist),
    })
}

/// Full-depth pipeline with no triage stage at all.
pub fn answer_untriaged(
    params: &Parameters,
    config: &ModelConfig,
    question: &TokenizedText,
    context: &TokenizedText,
) -> Result<Answer> {
    if context.is_empty() {
        return Err(Error::Empty("context"));
    }
    let (q_t, c_t) = forward_prefix(params, config, question, context)?;
    let (q_l, c_l) = forward_suffix(params, config, q_t, c_t)?;
    let dist = model_answer(params, &q_l, &c_l)?;
    let span = decode_final(config, context, &dist)?;
    let total_tokens = context.len();
    Ok(Answer {
        span,
        origin: Origin::Model,
        stats: AnswerStats { exited: false, total_tokens, kept_tokens: total_tokens, triage_confidence: f64::NAN },
        triage_span: span,
        model_dist: Some(dist),
    })
}

/// Decodes the final head, restricting spans to one paragraph under
/// shared normalization.
fn decode_final(config: &ModelConfig, context: &TokenizedText, dist: &SpanDistribution) -> Result<SpanScore> {
    if !config.shared_norm {
        return decode_span(dist, config.l_max).ok_or(Error::Empty("context"));
    }
    let mut segments: Vec<SpanDistribution> = Vec::new();
    let mut current = None;
    for (r, &pos) in dist.positions.iter().enumerate() {
        let pid = context.tokens[pos].paragraph_id;
        if current != Some(pid) {
            segments.push(SpanDistribution {
                start_logits: Vec::new(),
                end_logits: Vec::new(),
                start: Vec::new(),
                end: Vec::new(),
                positions: Vec::new(),
            });
            current = Some(pid);
        }
        let seg = segments.last_mut().unwrap();
        seg.start_logits.push(dist.start_logits[r]);
        seg.end_logits.push(dist.end_logits[r]);
        seg.positions.push(pos);
    }
    Ok(shared_norm_decode(&segments, config.l_max)?.1)
}

/// Selects `n_paragraphs` by TF-IDF and joins them in document order.
pub fn select_context(question: &TokenizedText, document: &[TokenizedText], n_paragraphs: usize) -> TokenizedText {
    let index = TfidfIndex::build(document);
    let mut ids = index.rank(question, n_paragraphs.max(1));
    ids.sort_unstable();
    TokenizedText::concat(ids.iter().map(|&i| &document[i]), "\n\n")
}

/// Which pipeline [`answer_document_with`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Triaged,
    Untriaged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentAnswer {
    pub text: String,
    pub answer: Answer,
    pub context: TokenizedText,
}

pub fn answer_document_with(
    params: &Parameters,
    config: &ModelConfig,
    question: &TokenizedText,
    document: &[TokenizedText],
    n_paragraphs: usize,
    route: Route,
) -> Result<DocumentAnswer> {
    if document.iter().all(|p| p.is_empty()) {
        return Err(Error::Empty("document"));
    }
    let context = select_context(question, document, n_paragraphs);
    let answer = match route {
        Route::Triaged => answer_question(params, config, question, &context)?,
        Route::Untriaged => answer_untriaged(params, config, question, &context)?,
    };
    let text = context.span_text(answer.span.b, answer.span.e).into();
    Ok(DocumentAnswer { text, answer, context })
}

/// TF-IDF selection followed by the triaged pipeline.
pub fn answer_document(
    params: &Parameters,
    config: &ModelConfig,
    question: &TokenizedText,
    document: &[TokenizedText],
    n_paragraphs: usize,
) -> Result<DocumentAnswer> {
    answer_document_with(params, config, question, document, n_paragraphs, Route::Triaged)
}
