//! Rule-based tokenization with byte offsets and sentence segmentation.
//!
//! Text is split on whitespace; leading and trailing non-alphanumeric
//! characters of each chunk become single-character tokens. A sentence ends
//! after a `.`, `!` or `?` token that is either the last token or is followed
//! by whitespace and a token starting with an uppercase letter.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub norm: String,
    /// Byte offset into the original text.
    pub char_start: usize,
    /// Exclusive byte offset.
    pub char_end: usize,
    pub sentence_id: usize,
    pub paragraph_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedText {
    pub original: String,
    pub tokens: Vec<Token>,
    /// Inclusive `(first, last)` token indices, one pair per sentence.
    pub sentence_spans: Vec<(usize, usize)>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn norms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.norm.as_str())
    }

    /// Relabels every token with `paragraph_id`.
    pub fn with_paragraph_id(mut self, paragraph_id: usize) -> Self {
        for t in &mut self.tokens {
            t.paragraph_id = paragraph_id;
        }
        self
    }

    /// Original text covered by tokens `first..=last`.
    pub fn span_text(&self, first: usize, last: usize) -> &str {
        &self.original[self.tokens[first].char_start..self.tokens[last].char_end]
    }

    /// Concatenates several texts into one, joining originals with `sep`.
    ///
    /// Offsets, sentence ids and sentence spans are shifted; paragraph ids are
    /// kept as they are on each input token.
    pub fn concat<'a, I>(parts: I, sep: &str) -> TokenizedText
    where
        I: IntoIterator<Item = &'a TokenizedText>,
    {
        let mut out = TokenizedText::default();
        for (i, part) in parts.into_iter().enumerate() {
            if i > 0 {
                out.original.push_str(sep);
            }
            let byte_shift = out.original.len();
            let tok_shift = out.tokens.len();
            let sent_shift = out.sentence_spans.len();
            out.original.push_str(&part.original);
            out.tokens.extend(part.tokens.iter().map(|t| Token {
                char_start: t.char_start + byte_shift,
                char_end: t.char_end + byte_shift,
                sentence_id: t.sentence_id + sent_shift,
                ..t.clone()
            }));
            out.sentence_spans
                .extend(part.sentence_spans.iter().map(|&(a, b)| (a + tok_shift, b + tok_shift)));
        }
        out
    }
}

fn is_sentence_final(surface: &str) -> bool {
    matches!(surface, "." | "!" | "?")
}

fn push_token(tokens: &mut Vec<Token>, text: &str, start: usize, end: usize) {
    let surface = &text[start..end];
    tokens.push(Token {
        surface: surface.into(),
        norm: surface.to_lowercase(),
        char_start: start,
        char_end: end,
        sentence_id: 0,
        paragraph_id: 0,
    });
}

fn split_chunk(tokens: &mut Vec<Token>, text: &str, start: usize, end: usize) {
    let chunk = &text[start..end];
    let Some(core_start) = chunk.char_indices().find(|(_, c)| c.is_alphanumeric()).map(|(i, _)| i)
    else {
        // Punctuation only: one token per character.
        for (i, c) in chunk.char_indices() {
            push_token(tokens, text, start + i, start + i + c.len_utf8());
        }
        return;
    };
    let core_end = chunk
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(chunk.len());

    for (i, c) in chunk[..core_start].char_indices() {
        push_token(tokens, text, start + i, start + i + c.len_utf8());
    }
    push_token(tokens, text, start + core_start, start + core_end);
    for (i, c) in chunk[core_end..].char_indices() {
        let s = start + core_end + i;
        push_token(tokens, text, s, s + c.len_utf8());
    }
}

pub fn tokenize(text: &str) -> TokenizedText {
    let mut tokens = Vec::new();
    let mut chunk_start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), chunk_start) {
            (true, Some(s)) => {
                split_chunk(&mut tokens, text, s, i);
                chunk_start = None;
            }
            (false, None) => chunk_start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = chunk_start {
        split_chunk(&mut tokens, text, s, text.len());
    }

    let mut sentence_spans = Vec::new();
    let mut first = 0;
    let n = tokens.len();
    for i in 0..n {
        let boundary = if i + 1 == n {
            true
        } else if is_sentence_final(&tokens[i].surface) {
            let next = &tokens[i + 1];
            next.char_start > tokens[i].char_end
                && next.surface.chars().next().is_some_and(char::is_uppercase)
        } else {
            false
        };
        if boundary {
            let id = sentence_spans.len();
            for t in &mut tokens[first..=i] {
                t.sentence_id = id;
            }
            sentence_spans.push((first, i));
            first = i + 1;
        }
    }

    TokenizedText { original: text.into(), tokens, sentence_spans }
}
