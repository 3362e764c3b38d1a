//! SQuAD v1.1 ingestion.

use std::path::Path;

use serde_json::Value;
use triage_core::corpus::{assemble_article, RawAnswer, RawArticle, RawParagraph, RawQuestion};
use triage_core::QASample;

use crate::error::CliError;

/// Samples of a whole file plus the ids dropped because a gold answer could
/// not be mapped onto tokens.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub samples: Vec<QASample>,
    pub excluded: Vec<String>,
    pub articles: usize,
}

pub fn load_squad(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let root: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("{}: not valid JSON: {e}", path.display())))?;
    parse_squad(&root)
}

pub fn parse_squad(root: &Value) -> Result<Loaded, CliError> {
    let data = root
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Input("top level: missing array `data`".into()))?;
    let mut out = Loaded { articles: data.len(), ..Loaded::default() };
    for (i, article) in data.iter().enumerate() {
        let raw = parse_article(article, &format!("data[{i}]"))?;
        let assembled = assemble_article(i, &raw);
        out.samples.extend(assembled.samples);
        out.excluded.extend(assembled.excluded);
    }
    Ok(out)
}

fn field<'a>(v: &'a Value, key: &str, at: &str) -> Result<&'a Value, CliError> {
    v.get(key).ok_or_else(|| CliError::Input(format!("{at}: missing field `{key}`")))
}

fn string(v: &Value, key: &str, at: &str) -> Result<String, CliError> {
    field(v, key, at)?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| CliError::Input(format!("{at}: field `{key}` is not a string")))
}

fn array<'a>(v: &'a Value, key: &str, at: &str) -> Result<&'a [Value], CliError> {
    field(v, key, at)?
        .as_array()
        .map(Vec::as_slice)
        .ok_or_else(|| CliError::Input(format!("{at}: field `{key}` is not an array")))
}

fn parse_article(v: &Value, at: &str) -> Result<RawArticle, CliError> {
    // A missing title is tolerated; everything below it is required.
    let title = v.get("title").and_then(Value::as_str).unwrap_or_default().to_owned();
    let paragraphs = array(v, "paragraphs", at)?
        .iter()
        .enumerate()
        .map(|(p, para)| parse_paragraph(para, &format!("{at}.paragraphs[{p}]")))
        .collect::<Result<_, _>>()?;
    Ok(RawArticle { title, paragraphs })
}

fn parse_paragraph(v: &Value, at: &str) -> Result<RawParagraph, CliError> {
    let context = string(v, "context", at)?;
    let qas = array(v, "qas", at)?
        .iter()
        .enumerate()
        .map(|(q, qa)| {
            let at = match qa.get("id").and_then(Value::as_str) {
                Some(id) => format!("{at}.qas[{q}] (id {id})"),
                None => format!("{at}.qas[{q}]"),
            };
            parse_question(qa, &at)
        })
        .collect::<Result<_, _>>()?;
    Ok(RawParagraph { context, qas })
}

fn parse_question(v: &Value, at: &str) -> Result<RawQuestion, CliError> {
    let id = string(v, "id", at)?;
    let question = string(v, "question", at)?;
    let answers = array(v, "answers", at)?
        .iter()
        .enumerate()
        .map(|(a, ans)| {
            let at = format!("{at}.answers[{a}]");
            let answer_start = field(ans, "answer_start", &at)?
                .as_u64()
                .ok_or_else(|| CliError::Input(format!("{at}: `answer_start` is not a non-negative integer")))?;
            Ok(RawAnswer { answer_start: answer_start as usize, text: string(ans, "text", &at)? })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(RawQuestion { id, question, answers })
}
