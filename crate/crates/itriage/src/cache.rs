//! `ITRC-CORPUS-1` corpus cache: a header line followed by one JSON record
//! per document. Paragraph text is stored raw and re-tokenized on load, so the
//! cache stays readable and the tokenizer remains the single source of truth.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use triage_core::text::tokenize;
use triage_core::{GoldSpan, QASample};

use crate::error::CliError;

pub const CORPUS_MAGIC: &str = "ITRC-CORPUS-1";

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    article: usize,
    paragraphs: Vec<String>,
    samples: Vec<SampleRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    question: String,
    golden: Option<usize>,
    answers: Vec<AnswerRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnswerRecord {
    paragraph: usize,
    token_start: usize,
    token_end: usize,
    text: String,
}

/// Summary counts printed by `prep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusCounts {
    pub documents: usize,
    pub samples: usize,
    pub paragraphs: usize,
    pub sentences: usize,
}

/// Groups consecutive samples sharing one document.
fn documents(samples: &[QASample]) -> Vec<&[QASample]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        let boundary = i == samples.len()
            || samples[i].article != samples[start].article
            || !Arc::ptr_eq(&samples[i].document, &samples[start].document);
        if boundary && i > start {
            out.push(&samples[start..i]);
            start = i;
        }
    }
    out
}

pub fn counts(samples: &[QASample]) -> CorpusCounts {
    let docs = documents(samples);
    CorpusCounts {
        documents: docs.len(),
        samples: samples.len(),
        paragraphs: docs.iter().map(|d| d[0].document.len()).sum(),
        sentences: docs.iter().flat_map(|d| d[0].document.iter()).map(|p| p.sentence_spans.len()).sum(),
    }
}

pub fn write_corpus(samples: &[QASample], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{CORPUS_MAGIC}")?;
    for doc in documents(samples) {
        let record = DocRecord {
            article: doc[0].article,
            paragraphs: doc[0].document.iter().map(|p| p.original.clone()).collect(),
            samples: doc
                .iter()
                .map(|s| SampleRecord {
                    id: s.id.clone(),
                    question: s.question.original.clone(),
                    golden: s.golden_paragraph_id,
                    answers: s
                        .gold_answers
                        .iter()
                        .map(|g| AnswerRecord {
                            paragraph: g.paragraph_id,
                            token_start: g.token_start,
                            token_end: g.token_end,
                            text: g.text.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut *out, &record)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_corpus(samples: &[QASample], path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_corpus(samples, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_corpus(input: impl BufRead) -> Result<Vec<QASample>, CliError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| CliError::Input(e.to_string()))?
        .unwrap_or_default();
    if header.trim_end() != CORPUS_MAGIC {
        return Err(CliError::Input(format!("not a corpus cache (expected header {CORPUS_MAGIC})")));
    }
    let mut samples = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::Input(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_no = n + 1;
        let record: DocRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("record {record_no}: {e}")))?;
        samples.extend(expand(record, record_no)?);
    }
    Ok(samples)
}

fn expand(record: DocRecord, record_no: usize) -> Result<Vec<QASample>, CliError> {
    let document = Arc::new(
        record
            .paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| tokenize(p).with_paragraph_id(i))
            .collect::<Vec<_>>(),
    );
    record
        .samples
        .into_iter()
        .map(|s| {
            let bad = |what: &str| CliError::Input(format!("record {record_no}, sample {}: {what}", s.id));
            if let Some(g) = s.golden {
                if g >= document.len() {
                    return Err(bad("golden paragraph out of range"));
                }
            }
            let mut gold_answers = Vec::with_capacity(s.answers.len());
            for a in &s.answers {
                let para = document.get(a.paragraph).ok_or_else(|| bad("answer paragraph out of range"))?;
                if a.token_start > a.token_end || a.token_end >= para.len() {
                    return Err(bad("answer span out of range"));
                }
                gold_answers.push(GoldSpan {
                    paragraph_id: a.paragraph,
                    token_start: a.token_start,
                    token_end: a.token_end,
                    text: a.text.clone(),
                });
            }
            Ok(QASample {
                id: s.id,
                article: record.article,
                question: tokenize(&s.question),
                document: Arc::clone(&document),
                gold_answers,
                golden_paragraph_id: s.golden,
            })
        })
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<QASample>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}
