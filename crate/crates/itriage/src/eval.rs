//! Accuracy, latency, pruning and confidence reporting over a dataset.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use triage_core::metrics::{confidence_profile, em_f1, mean, percentile, std_dev};
use triage_core::train::{train_with, Sgd};
use triage_core::triage::{answer_question, answer_untriaged, select_context, Answer, Route};
use triage_core::{ModelConfig, Parameters, QASample};

use crate::error::CliError;

/// Latency passes per benchmark.
pub const PASSES: usize = 5;

/// Per-question result of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub em: f64,
    pub f1: f64,
    /// Scores of the triage head's own best span.
    pub triage_em: f64,
    pub triage_f1: f64,
    pub triage_confidence: f64,
    pub exited: bool,
    /// Fraction of context tokens the suffix layers never saw.
    pub pruned: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub exit_rate: f64,
    /// Exited questions count as fully pruned.
    pub pruned_portion: f64,
    /// Average over questions that reached the final layers only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pruned_portion_nonexit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_p90: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_p99: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_std_over_runs: Option<f64>,
}

/// Latency summary in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mean: f64,
    pub std: f64,
    pub p90: f64,
    pub p99: f64,
}

fn run(params: &Parameters, config: &ModelConfig, sample: &QASample, n_paragraphs: usize, route: Route) -> Result<(Answer, triage_core::TokenizedText, f64), CliError> {
    let start = Instant::now();
    let context = select_context(&sample.question, &sample.document, n_paragraphs);
    if context.is_empty() {
        return Err(CliError::Input(format!("sample {}: empty context", sample.id)));
    }
    let answer = match route {
        Route::Triaged => answer_question(params, config, &sample.question, &context)?,
        Route::Untriaged => answer_untriaged(params, config, &sample.question, &context)?,
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((answer, context, ms))
}

/// Runs one question and scores it. The returned latency covers paragraph
/// selection and the network, not tokenization or answer-text scoring.
pub fn answer_sample(
    params: &Parameters,
    config: &ModelConfig,
    sample: &QASample,
    n_paragraphs: usize,
    route: Route,
) -> Result<(Outcome, f64), CliError> {
    let (answer, context, ms) = run(params, config, sample, n_paragraphs, route)?;
    let golds = sample.gold_texts();
    let (em, f1) = em_f1(context.span_text(answer.span.b, answer.span.e), &golds);
    let (triage_em, triage_f1) = em_f1(context.span_text(answer.triage_span.b, answer.triage_span.e), &golds);
    let outcome = Outcome {
        em,
        f1,
        triage_em,
        triage_f1,
        triage_confidence: answer.stats.triage_confidence,
        exited: answer.stats.exited,
        pruned: answer.stats.pruned_portion(),
    };
    Ok((outcome, ms))
}

/// Scores every sample, spreading the work over `jobs` threads. Results are
/// returned in dataset order regardless of `jobs`.
pub fn outcomes(
    params: &Parameters,
    config: &ModelConfig,
    dataset: &[QASample],
    n_paragraphs: usize,
    route: Route,
    jobs: usize,
) -> Result<Vec<Outcome>, CliError> {
    let jobs = jobs.clamp(1, dataset.len().max(1));
    if jobs == 1 {
        return dataset.iter().map(|s| answer_sample(params, config, s, n_paragraphs, route).map(|r| r.0)).collect();
    }
    let chunk = dataset.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<Outcome>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = dataset
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| answer_sample(params, config, s, n_paragraphs, route).map(|r| r.0))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(dataset.len());
    for part in parts {
        all.extend(part?);
    }
    Ok(all)
}

/// Per-pass lists of per-question latencies, measured sequentially.
pub fn latencies(
    params: &Parameters,
    config: &ModelConfig,
    dataset: &[QASample],
    n_paragraphs: usize,
    route: Route,
    passes: usize,
) -> Result<Vec<Vec<f64>>, CliError> {
    (0..passes)
        .map(|_| dataset.iter().map(|s| run(params, config, s, n_paragraphs, route).map(|r| r.2)).collect())
        .collect()
}

/// Mean and standard deviation of the per-pass means, and nearest-rank
/// percentiles of all per-question latencies pooled over the passes.
pub fn summarize_latency(passes: &[Vec<f64>]) -> Option<BenchReport> {
    let run_means: Vec<f64> = passes.iter().filter_map(|p| mean(p)).collect();
    let pooled: Vec<f64> = passes.iter().flatten().copied().collect();
    Some(BenchReport {
        mean: mean(&run_means)?,
        std: std_dev(&run_means)?,
        p90: percentile(&pooled, 90.0)?,
        p99: percentile(&pooled, 99.0)?,
    })
}

pub fn accuracy_report(outcomes: &[Outcome]) -> EvalReport {
    let pct = |f: &dyn Fn(&Outcome) -> f64| {
        let v: Vec<f64> = outcomes.iter().map(f).collect();
        mean(&v).map_or(0.0, |m| m * 100.0)
    };
    let nonexit: Vec<f64> = outcomes.iter().filter(|o| !o.exited).map(|o| o.pruned).collect();
    EvalReport {
        n: outcomes.len(),
        em: pct(&|o| o.em),
        f1: pct(&|o| o.f1),
        exit_rate: pct(&|o| o.exited as u8 as f64),
        pruned_portion: pct(&|o| o.pruned),
        pruned_portion_nonexit: mean(&nonexit).map(|m| m * 100.0),
        latency_mean: None,
        latency_p90: None,
        latency_p99: None,
        latency_std_over_runs: None,
    }
}

/// Full evaluation: accuracy (parallel over `jobs`) plus latency over
/// [`PASSES`] sequential passes.
pub fn evaluate(
    params: &Parameters,
    config: &ModelConfig,
    dataset: &[QASample],
    n_paragraphs: usize,
    route: Route,
    jobs: usize,
) -> Result<EvalReport, CliError> {
    let mut report = accuracy_report(&outcomes(params, config, dataset, n_paragraphs, route, jobs)?);
    if let Some(b) = summarize_latency(&latencies(params, config, dataset, n_paragraphs, route, PASSES)?) {
        report.latency_mean = Some(b.mean);
        report.latency_p90 = Some(b.p90);
        report.latency_p99 = Some(b.p99);
        report.latency_std_over_runs = Some(b.std);
    }
    Ok(report)
}

pub fn bench(
    params: &Parameters,
    config: &ModelConfig,
    dataset: &[QASample],
    n_paragraphs: usize,
    route: Route,
) -> Result<Option<BenchReport>, CliError> {
    Ok(summarize_latency(&latencies(params, config, dataset, n_paragraphs, route, PASSES)?))
}

/// `(top-N%, triage F1 %)` rows over triage confidence.
pub fn profile(outcomes: &[Outcome], buckets: &[f64]) -> Result<Vec<(f64, f64)>, CliError> {
    if let Some(b) = buckets.iter().find(|&&b| !(b > 0.0 && b <= 100.0)) {
        return Err(CliError::Usage(format!("bucket {b} is outside (0, 100]")));
    }
    let scored: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.triage_confidence, o.triage_f1)).collect();
    Ok(confidence_profile(&scored, buckets))
}

/// Trains one model per triage depth and reports triage-head F1 (%) on the
/// held-out set, sorted by depth.
#[allow(clippy::too_many_arguments)]
pub fn t_sweep(
    train_set: &[QASample],
    held_out: &[QASample],
    base: &ModelConfig,
    depths: &[usize],
    epochs: usize,
    sgd: Sgd,
    n_paragraphs: usize,
    jobs: usize,
) -> Result<Vec<(usize, f64)>, CliError> {
    let mut depths = depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    let mut rows = Vec::with_capacity(depths.len());
    for t in depths {
        let config = ModelConfig { triage_layer: t, ..base.clone() };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let init = triage_core::params::init_params(&config, triage_core::params::DEFAULT_VOCAB_SIZE)?;
        let (params, _) = train_with(&init, &config, train_set, epochs, sgd, |_, _| {})?;
        let outs = outcomes(&params, &config, held_out, n_paragraphs, Route::Triaged, jobs)?;
        let f1: Vec<f64> = outs.iter().map(|o| o.triage_f1).collect();
        rows.push((t, mean(&f1).map_or(0.0, |m| m * 100.0)));
    }
    Ok(rows)
}
