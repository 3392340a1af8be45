//! Domain types shared by every other module: questions, parsed traces,
//! token sequences, and the response format machinery.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a question's gold answer is compared against a model answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    MultipleChoice,
    FreeForm,
}

/// A single task instance. `context` is an opaque stand-in for whatever
/// scene or image description the task came with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub context: String,
    pub prompt: String,
    pub gold_answer: String,
    pub answer_kind: AnswerKind,
}

impl Question {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Data("question with empty id".into()));
        }
        if self.gold_answer.is_empty() {
            return Err(Error::Data(format!(
                "question {} has empty gold_answer",
                self.id
            )));
        }
        Ok(())
    }
}

/// A model response split into its thinking and answer segments.
///
/// Malformedness is data, not failure: a response that does not match the
/// format template comes back with `well_formed == false`, a best-effort
/// `thinking` extraction, and an empty `answer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub thinking: String,
    pub answer: String,
    pub raw: String,
    pub well_formed: bool,
}

/// Tokenized text plus its length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    count: usize,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        let count = tokens.len();
        TokenSequence { tokens, count }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Deterministic tokenization scheme. The whitespace scheme splits on
/// maximal whitespace runs; the char-ngram scheme slides a fixed-width
/// window over the non-whitespace characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum Tokenizer {
    Whitespace,
    CharNgram { n: usize },
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::Whitespace
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        match self {
            Tokenizer::Whitespace => {
                TokenSequence::new(text.split_whitespace().map(str::to_string).collect())
            }
            Tokenizer::CharNgram { n } => {
                let n = (*n).max(1);
                let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
                if chars.is_empty() {
                    return TokenSequence::new(Vec::new());
                }
                if chars.len() <= n {
                    return TokenSequence::new(vec![chars.iter().collect()]);
                }
                let tokens = chars
                    .windows(n)
                    .map(|w| w.iter().collect::<String>())
                    .collect();
                TokenSequence::new(tokens)
            }
        }
    }

    /// Token count shorthand.
    pub fn count(&self, text: &str) -> usize {
        self.tokenize(text).count()
    }
}

/// Open/close markers delimiting the thinking and answer segments of a raw
/// response. Defaults to the R1 convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub think_open: String,
    pub think_close: String,
    pub answer_open: String,
    pub answer_close: String,
}

impl Default for FormatSpec {
    fn default() -> Self {
        FormatSpec {
            think_open: "<think>".into(),
            think_close: "</think>".into(),
            answer_open: "<answer>".into(),
            answer_close: "</answer>".into(),
        }
    }
}

impl FormatSpec {
    fn markers(&self) -> [&str; 4] {
        [
            &self.think_open,
            &self.think_close,
            &self.answer_open,
            &self.answer_close,
        ]
    }

    /// Render a well-formed response from marker-free segments.
    pub fn render(&self, thinking: &str, answer: &str) -> String {
        format!(
            "{}{}{}{}{}{}",
            self.think_open, thinking, self.think_close, self.answer_open, answer, self.answer_close
        )
    }
}

impl fmt::Display for AnswerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerKind::MultipleChoice => write!(f, "multiple_choice"),
            AnswerKind::FreeForm => write!(f, "free_form"),
        }
    }
}

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return 0;
    }
    let mut count = 0;
    let mut at = 0;
    while let Some(pos) = haystack[at..].find(needle) {
        count += 1;
        at += pos + needle.len();
    }
    count
}

/// Parse a raw response against a format template.
///
/// `well_formed` is true iff the raw string contains exactly one thinking
/// segment followed by exactly one answer segment and nothing else besides
/// whitespace. Malformed input yields a best-effort thinking extraction and
/// an empty answer.
pub fn parse_response(raw: &str, format: &FormatSpec) -> Trace {
    let malformed = |thinking: String| Trace {
        thinking,
        answer: String::new(),
        raw: raw.to_string(),
        well_formed: false,
    };

    // Each marker must appear exactly once for the response to be well formed.
    let exact_once = format
        .markers()
        .iter()
        .all(|m| count_occurrences(raw, m) == 1);

    if !exact_once {
        return malformed(best_effort_thinking(raw, format));
    }

    let t_open = raw.find(&format.think_open).unwrap();
    let t_close = raw.find(&format.think_close).unwrap();
    let a_open = raw.find(&format.answer_open).unwrap();
    let a_close = raw.find(&format.answer_close).unwrap();

    let ordered = t_open < t_close && t_close < a_open && a_open < a_close;
    if !ordered {
        return malformed(best_effort_thinking(raw, format));
    }

    let thinking = &raw[t_open + format.think_open.len()..t_close];
    let answer = &raw[a_open + format.answer_open.len()..a_close];

    let prefix_ws = raw[..t_open].trim().is_empty();
    let gap_ws = raw[t_close + format.think_close.len()..a_open].trim().is_empty();
    let suffix_ws = raw[a_close + format.answer_close.len()..].trim().is_empty();
    if !(prefix_ws && gap_ws && suffix_ws) {
        return malformed(best_effort_thinking(raw, format));
    }

    Trace {
        thinking: thinking.to_string(),
        answer: answer.to_string(),
        raw: raw.to_string(),
        well_formed: true,
    }
}

/// Best-effort thinking extraction for malformed responses: the segment
/// between the first thinking markers when both exist, the text after a
/// dangling open marker, or the whole response when no markers are present.
fn best_effort_thinking(raw: &str, format: &FormatSpec) -> String {
    if let Some(open) = raw.find(&format.think_open) {
        let after = &raw[open + format.think_open.len()..];
        if let Some(close) = after.find(&format.think_close) {
            return after[..close].to_string();
        }
        let end = after.find(&format.answer_open).unwrap_or(after.len());
        return after[..end].to_string();
    }
    raw.trim().to_string()
}

/// Read a line-delimited dataset of questions, validating each record.
pub fn load_questions(path: &Path) -> Result<Vec<Question>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut questions = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| {
            Error::Data(format!(
                "{}:{}: bad question record: {}",
                path.display(),
                lineno + 1,
                e
            ))
        })?;
        q.validate()?;
        if !seen.insert(q.id.clone()) {
            return Err(Error::Data(format!("duplicate question id: {}", q.id)));
        }
        questions.push(q);
    }
    Ok(questions)
}
