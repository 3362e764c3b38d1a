//! Question/answer samples over multi-paragraph documents.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::{tokenize, TokenizedText};

/// A gold answer as an inclusive token span inside one paragraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSpan {
    pub paragraph_id: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QASample {
    pub id: String,
    /// Index of the source article in file order.
    pub article: usize,
    pub question: TokenizedText,
    pub document: Arc<Vec<TokenizedText>>,
    pub gold_answers: Vec<GoldSpan>,
    pub golden_paragraph_id: Option<usize>,
}

impl QASample {
    /// The golden paragraph and the first gold span inside it, used for training.
    pub fn training_target(&self) -> Option<(&TokenizedText, &GoldSpan)> {
        let pid = self.golden_paragraph_id?;
        let gold = self.gold_answers.iter().find(|g| g.paragraph_id == pid)?;
        Some((&self.document[pid], gold))
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.gold_answers.iter().map(|g| g.text.as_str()).collect()
    }
}

/// Smallest inclusive token span covering the byte range `[start, end)`.
pub fn char_span_to_tokens(text: &TokenizedText, start: usize, end: usize) -> Option<(usize, usize)> {
    if start >= end || end > text.original.len() {
        return None;
    }
    let mut hit = text
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.char_start < end && t.char_end > start)
        .map(|(i, _)| i);
    let first = hit.next()?;
    let last = hit.next_back().unwrap_or(first);
    Some((first, last))
}

/// Byte offset of the `char_index`-th Unicode scalar, or `None` past the end.
pub fn char_to_byte(text: &str, char_index: usize) -> Option<usize> {
    if char_index == text.chars().count() {
        return Some(text.len());
    }
    text.char_indices().nth(char_index).map(|(b, _)| b)
}

/// One annotated answer as it appears in SQuAD: a character offset plus text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnswer {
    pub answer_start: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuestion {
    pub id: String,
    pub question: String,
    pub answers: Vec<RawAnswer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawParagraph {
    pub context: String,
    pub qas: Vec<RawQuestion>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawArticle {
    pub title: String,
    pub paragraphs: Vec<RawParagraph>,
}

/// Samples built from one article plus the ids of questions that had to be
/// excluded because a gold answer could not be mapped onto tokens.
#[derive(Debug, Clone, Default)]
pub struct Assembled {
    pub samples: Vec<QASample>,
    pub excluded: Vec<String>,
}

/// Builds document-level samples: every question sees all paragraphs of its
/// article in order.
pub fn assemble_article(article: usize, raw: &RawArticle) -> Assembled {
    let document: Arc<Vec<TokenizedText>> = Arc::new(
        raw.paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| tokenize(&p.context).with_paragraph_id(i))
            .collect(),
    );
    let mut out = Assembled::default();
    for (pid, para) in raw.paragraphs.iter().enumerate() {
        let text = &document[pid];
        for qa in &para.qas {
            let golds: Option<Vec<GoldSpan>> = qa
                .answers
                .iter()
                .map(|a| {
                    let start = char_to_byte(&para.context, a.answer_start)?;
                    let end = start.checked_add(a.text.len())?;
                    if !para.context.is_char_boundary(end.min(para.context.len())) {
                        return None;
                    }
                    let (token_start, token_end) = char_span_to_tokens(text, start, end)?;
                    Some(GoldSpan { paragraph_id: pid, token_start, token_end, text: a.text.clone() })
                })
                .collect();
            match golds {
                Some(g) if !g.is_empty() => out.samples.push(QASample {
                    id: qa.id.clone(),
                    article,
                    question: tokenize(&qa.question),
                    document: Arc::clone(&document),
                    golden_paragraph_id: Some(pid),
                    gold_answers: g,
                }),
                _ => out.excluded.push(qa.id.clone()),
            }
        }
    }
    out
}

/// Splits by source article: the first `n_docs` articles go to the first half.
pub fn split_dev(samples: &[QASample], n_docs: usize) -> Result<(Vec<QASample>, Vec<QASample>)> {
    let mut articles: Vec<usize> = samples.iter().map(|s| s.article).collect();
    articles.dedup();
    let distinct: BTreeSet<usize> = articles.iter().copied().collect();
    if n_docs > distinct.len() {
        return Err(Error::SplitTooLarge { requested: n_docs, available: distinct.len() });
    }
    // Articles in first-appearance order.
    let mut order = Vec::new();
    for a in articles {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    let head: BTreeSet<usize> = order.into_iter().take(n_docs).collect();
    Ok(samples.iter().cloned().partition(|s| head.contains(&s.article)))
}

const SYLLABLES: [&str; 12] = ["ba", "ko", "mi", "tu", "re", "sa", "lo", "ni", "ve", "du", "pa", "gi"];

fn word(class: char, index: usize) -> String {
    let a = SYLLABLES[index % SYLLABLES.len()];
    let b = SYLLABLES[(index / SYLLABLES.len()) % SYLLABLES.len()];
    format!("{a}{b}{class}")
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

const FILLER_WORDS: usize = 96;
const KEY_WORDS: usize = 48;
const ANSWER_WORDS: usize = 40;

/// Deterministic synthetic reading-comprehension corpus.
///
/// Every sentence carries a two-word key phrase followed by a one- or
/// two-word answer. Key phrases are unique within a document, and each
/// paragraph contributes one question of the form
/// `What comes after <key phrase>?` whose answer is the span following that
/// phrase.
pub fn synth_corpus(seed: u64, n_docs: usize, paras_per_doc: usize) -> Vec<QASample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_docs * paras_per_doc);
    for doc in 0..n_docs {
        let mut used = BTreeSet::new();
        let mut raw = RawArticle { title: format!("synthetic-{doc}"), paragraphs: Vec::new() };
        for para in 0..paras_per_doc {
            let n_sent = rng.gen_range(2..=4);
            let target = rng.gen_range(0..n_sent);
            let mut context = String::new();
            let mut qa = None;
            for s in 0..n_sent {
                let key = loop {
                    let k = (rng.gen_range(0..KEY_WORDS), rng.gen_range(0..KEY_WORDS));
                    if k.0 != k.1 && used.insert(k) {
                        break k;
                    }
                };
                let mut words: Vec<String> = Vec::new();
                for _ in 0..rng.gen_range(1..=3) {
                    words.push(word('e', rng.gen_range(0..FILLER_WORDS)));
                }
                words.push(word('k', key.0));
                words.push(word('k', key.1));
                let answer: Vec<String> =
                    (0..rng.gen_range(1..=2)).map(|_| word('n', rng.gen_range(0..ANSWER_WORDS))).collect();
                let before = words.join(" ");
                words.extend(answer.iter().cloned());
                for _ in 0..rng.gen_range(0..=2) {
                    words.push(word('e', rng.gen_range(0..FILLER_WORDS)));
                }
                words[0] = capitalize(&words[0]);
                if !context.is_empty() {
                    context.push(' ');
                }
                let sentence_start = context.chars().count();
                let before_len = capitalize(&before).chars().count();
                context.push_str(&words.join(" "));
                context.push('.');
                if s == target {
                    let answer_text = answer.join(" ");
                    qa = Some(RawQuestion {
                        id: format!("synth-{seed}-{doc}-{para}"),
                        question: format!("What comes after {} {}?", word('k', key.0), word('k', key.1)),
                        answers: alloc::vec![RawAnswer {
                            answer_start: sentence_start + before_len + 1,
                            text: answer_text,
                        }],
                    });
                }
            }
            raw.paragraphs.push(RawParagraph { context, qas: qa.into_iter().collect() });
        }
        let assembled = assemble_article(doc, &raw);
        debug_assert!(assembled.excluded.is_empty());
        samples.extend(assembled.samples);
    }
    samples
}

/// Shuffles sample order with a seeded generator.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn article() -> RawArticle {
        let para = |ctx: &str, qas: Vec<RawQuestion>| RawParagraph { context: ctx.into(), qas };
        RawArticle {
            title: "t".into(),
            paragraphs: vec![
                para("Alpha beta gamma.", vec![]),
                para(
                    "Delta epsilon zeta. Eta theta.",
                    vec![
                        RawQuestion {
                            id: "q1".into(),
                            question: "Which letter?".into(),
                            answers: vec![RawAnswer { answer_start: 6, text: "epsilon".into() }],
                        },
                        RawQuestion {
                            id: "q2".into(),
                            question: "Mid token?".into(),
                            answers: vec![RawAnswer { answer_start: 22, text: "a th".into() }],
                        },
                        RawQuestion {
                            id: "bad".into(),
                            question: "Out of range?".into(),
                            answers: vec![RawAnswer { answer_start: 500, text: "x".into() }],
                        },
                    ],
                ),
                para("Iota.", vec![]),
            ],
        }
    }

    #[test]
    fn assembles_document_level_samples() {
        let a = assemble_article(7, &article());
        assert_eq!(a.samples.len(), 2);
        assert_eq!(a.excluded, vec![String::from("bad")]);
        let s = &a.samples[0];
        assert_eq!(s.article, 7);
        assert_eq!(s.document.len(), 3);
        assert_eq!(s.golden_paragraph_id, Some(1));
        assert_eq!(s.gold_answers[0], GoldSpan { paragraph_id: 1, token_start: 1, token_end: 1, text: "epsilon".into() });
        assert_eq!(s.document[1].tokens[0].paragraph_id, 1);
    }

    #[test]
    fn mid_token_answer_maps_to_covering_tokens() {
        let a = assemble_article(0, &article());
        let g = &a.samples[1].gold_answers[0];
        // "Eta theta." -> "a th" covers the tail of "Eta" and the head of "theta".
        assert_eq!((g.token_start, g.token_end), (4, 5));
        let para = &a.samples[1].document[1];
        assert!(para.span_text(g.token_start, g.token_end).contains("a th"));
    }

    #[test]
    fn char_offsets_are_unicode_scalars() {
        assert_eq!(char_to_byte("äbc", 1), Some(2));
        assert_eq!(char_to_byte("äbc", 3), Some(4));
        assert_eq!(char_to_byte("äbc", 4), None);
    }

    fn sample_for(article: usize) -> QASample {
        QASample {
            id: format!("{article}"),
            article,
            question: tokenize("q"),
            document: Arc::new(vec![tokenize("c")]),
            gold_answers: vec![],
            golden_paragraph_id: None,
        }
    }

    #[test]
    fn split_dev_by_article() {
        let samples: Vec<QASample> = (0..48).flat_map(|a| [sample_for(a), sample_for(a)]).collect();
        let (val, test) = split_dev(&samples, 16).unwrap();
        assert_eq!(val.len(), 32);
        assert_eq!(test.len(), 64);
        assert!(val.iter().all(|s| s.article < 16));
        assert!(test.iter().all(|s| s.article >= 16));

        let (val, test) = split_dev(&samples, 0).unwrap();
        assert!(val.is_empty() && test.len() == 96);
        let (val, test) = split_dev(&samples, 48).unwrap();
        assert!(test.is_empty() && val.len() == 96);
        assert_eq!(split_dev(&samples, 49), Err(Error::SplitTooLarge { requested: 49, available: 48 }));
    }

    #[test]
    fn synth_corpus_is_answerable_and_deterministic() {
        let c = synth_corpus(1, 2, 3);
        assert_eq!(c.len(), 6);
        for s in &c {
            assert_eq!(s.document.len(), 3);
            let (para, gold) = s.training_target().unwrap();
            assert_eq!(para.span_text(gold.token_start, gold.token_end), gold.text);
            // The key phrase occurs exactly once in the whole document.
            let q: Vec<&str> = s.question.norms().collect();
            let key = &q[3..5];
            let hits: usize = s
                .document
                .iter()
                .map(|p| {
                    let n: Vec<&str> = p.norms().collect();
                    n.windows(2).filter(|w| w == &key).count()
                })
                .sum();
            assert_eq!(hits, 1);
            let n: Vec<&str> = para.norms().collect();
            assert_eq!(&n[gold.token_start - 2..gold.token_start], key);
        }
        assert_eq!(synth_corpus(1, 2, 3), c);
        assert_ne!(synth_corpus(2, 2, 3), c);
    }
}
