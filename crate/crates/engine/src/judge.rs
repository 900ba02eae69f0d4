//! Model-as-judge: rubric quality scores and annotation/answer alignment.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use strokelab_core::metrics::answers_match;
use strokelab_core::prompting::{alignment_prompt, assets, rubric_prompt, Rubric};
use strokelab_core::render::RasterImage;

use crate::gateway::{ChatMessage, ChatModel, GatewayError, Part, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inferred_answer: Option<String>,
    /// Raw text of the reply the verdict was read from.
    pub raw: String,
    /// Model calls spent (2 when the format reminder was needed).
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("no valid `Quality Score: N` line (N in 1..=5) in: {raw:?}")]
    ScoreParseFailure { raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("no `Quality Score:` line")]
    Missing,
    #[error("score {0} outside 1..=5")]
    OutOfRange(i64),
}

fn score_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s*#>_-]*quality\s+score\s*[*_]*\s*:\s*[*_]*\s*(-?\d+)").expect("static regex"))
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s*#>_-]*answer\s*[*_]*\s*:\s*[*_]*\s*(.*?)\s*[*_]*\s*$").expect("static regex"))
}

/// Reads the last `Quality Score: N` line. Returns the reasoning (all text
/// before that line, trimmed) and the score.
pub fn parse_quality_score(text: &str) -> Result<(String, u8), ScoreError> {
    let cap = score_re().captures_iter(text).last().ok_or(ScoreError::Missing)?;
    let n: i64 = cap[1].parse().map_err(|_| ScoreError::Missing)?;
    if !(1..=5).contains(&n) {
        return Err(ScoreError::OutOfRange(n));
    }
    let start = cap.get(0).expect("match").start();
    Ok((text[..start].trim().to_owned(), n as u8))
}

/// Reads the last `Answer: X` line. Returns the reasoning and the answer;
/// `none` (any case) and empty answers read as `None`.
pub fn parse_alignment_answer(text: &str) -> (String, Option<String>) {
    match answer_re().captures_iter(text).last() {
        Some(cap) => {
            let start = cap.get(0).expect("match").start();
            let ans = cap[1].trim().to_owned();
            let ans = (!ans.is_empty() && !ans.eq_ignore_ascii_case("none")).then_some(ans);
            (text[..start].trim().to_owned(), ans)
        }
        None => (text.trim().to_owned(), None),
    }
}

fn image_pair(rubric_text: String, original: &RasterImage, annotated: &RasterImage) -> Vec<ChatMessage> {
    vec![ChatMessage::user(vec![
        Part::Text(rubric_text),
        Part::Text("Original image:".into()),
        Part::Image(original.clone()),
        Part::Text("Annotated image:".into()),
        Part::Image(annotated.clone()),
    ])]
}

/// Scores an annotated image against its original with a rubric. A reply
/// without a valid score gets one retry with a format reminder.
pub fn judge_quality(
    model: &dyn ChatModel,
    original: &RasterImage,
    annotated: &RasterImage,
    rubric: Rubric,
    proposed_path: Option<&str>,
) -> Result<JudgeVerdict, JudgeError> {
    let mut msgs = image_pair(rubric_prompt(rubric, proposed_path), original, annotated);
    let first = model.complete(&msgs)?;
    if let Ok((reasoning, score)) = parse_quality_score(&first) {
        return Ok(JudgeVerdict { reasoning, score: Some(score), inferred_answer: None, raw: first, attempts: 1 });
    }
    msgs.push(ChatMessage { role: Role::Assistant, parts: vec![Part::Text(first)] });
    msgs.push(ChatMessage::user(vec![Part::Text(assets::JUDGE_FORMAT_REMINDER.to_owned())]));
    let second = model.complete(&msgs)?;
    match parse_quality_score(&second) {
        Ok((reasoning, score)) => Ok(JudgeVerdict { reasoning, score: Some(score), inferred_answer: None, raw: second, attempts: 2 }),
        Err(_) => Err(JudgeError::ScoreParseFailure { raw: second }),
    }
}

/// Asks the judge which answer the annotations alone indicate. The image
/// must not show the model's written answer.
pub fn judge_alignment(model: &dyn ChatModel, annotated: &RasterImage, question: &str) -> Result<JudgeVerdict, JudgeError> {
    let msgs = vec![ChatMessage::user(vec![Part::Text(alignment_prompt(question)), Part::Image(annotated.clone())])];
    let raw = model.complete(&msgs)?;
    let (reasoning, inferred_answer) = parse_alignment_answer(&raw);
    Ok(JudgeVerdict { reasoning, score: None, inferred_answer, raw, attempts: 1 })
}

/// Fraction of pairs where the inferred answer matches the model's answer
/// after normalization; a missing answer on either side counts as a
/// mismatch. `None` for empty input.
pub fn align_rate(inferred: &[Option<String>], model_answers: &[Option<String>]) -> Option<f64> {
    let n = inferred.len().min(model_answers.len());
    if n == 0 {
        return None;
    }
    let hits = inferred
        .iter()
        .zip(model_answers)
        .filter(|(a, b)| matches!((a, b), (Some(a), Some(b)) if answers_match(a, b)))
        .count();
    Some(hits as f64 / n as f64)
}

/// One line of a verdict log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub instance_id: String,
    pub protocol: String,
    #[serde(flatten)]
    pub verdict: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
