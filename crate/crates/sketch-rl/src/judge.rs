//! SketchJudge: scores a thinking process as sketch-style (1) or normal (0).
//!
//! Two judges are provided. The rule judge is deterministic and offline; it
//! operationalizes sketch style as a short numbered list. The external judge
//! forwards the scoring prompt to an HTTP chat endpoint and parses the first
//! numeric literal out of the reply. Both can run in binary or dense mode.

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::core::Tokenizer;
use crate::error::{Error, Result};

/// Scoring template sent to the judge. The `[THINKING]` slot is filled by
/// `render_judge_prompt`.
pub const JUDGE_PROMPT_TEMPLATE: &str = "Give a score of 1 for sketch-style thinking and a score of 0 for normal thinking. Normal thinking contains detailed analysis. Sketch-style thinking contains only the key logic flow. Only output the final score. Now, score this thinking process: [THINKING]";

/// Extra instruction appended in dense mode.
pub const DENSE_SUFFIX: &str = " Output a floating-point score between 0.0 and 1.0.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Binary,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeSource {
    Rule,
    External,
}

/// A judge's score for one thinking process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub score: f64,
    pub mode: JudgeMode,
    pub source: JudgeSource,
}

/// One labeled example for judge fine-tuning: a thinking process plus its
/// style label (1 = sketch, 0 = normal).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeExample {
    pub thinking: String,
    pub label: u8,
    pub origin_id: String,
}

/// Thresholds defining sketch style for the rule judge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleJudgeConfig {
    pub min_numbered_steps: usize,
    pub max_mean_step_tokens: usize,
    pub max_total_tokens: usize,
}

impl Default for RuleJudgeConfig {
    fn default() -> Self {
        RuleJudgeConfig {
            min_numbered_steps: 2,
            max_mean_step_tokens: 15,
            max_total_tokens: 120,
        }
    }
}

impl RuleJudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_numbered_steps == 0 || self.max_mean_step_tokens == 0 || self.max_total_tokens == 0
        {
            return Err(Error::Config("rule judge thresholds must be positive".into()));
        }
        Ok(())
    }
}

fn numbered_step_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+\.(\s|$)").unwrap())
}

/// Lines of `thinking` that look like numbered steps ("1. ...").
fn numbered_steps(thinking: &str) -> Vec<&str> {
    thinking
        .lines()
        .filter(|line| numbered_step_re().is_match(line))
        .collect()
}

/// Structural criteria: enough numbered steps, each short on average.
fn form_compliant(thinking: &str, config: &RuleJudgeConfig, tokenizer: &Tokenizer) -> bool {
    let steps = numbered_steps(thinking);
    if steps.len() < config.min_numbered_steps {
        return false;
    }
    let step_tokens: usize = steps.iter().map(|s| tokenizer.count(s)).sum();
    let mean = step_tokens as f64 / steps.len() as f64;
    mean <= config.max_mean_step_tokens as f64
}

/// Deterministic reference judge, binary mode.
///
/// Scores 1 iff the thinking has at least `min_numbered_steps` numbered
/// lines, the mean tokens per numbered step stays within
/// `max_mean_step_tokens`, and the whole thinking stays within
/// `max_total_tokens`.
pub fn rule_judge(thinking: &str, config: &RuleJudgeConfig, tokenizer: &Tokenizer) -> JudgeVerdict {
    let total = tokenizer.count(thinking);
    let sketch = form_compliant(thinking, config, tokenizer) && total <= config.max_total_tokens;
    JudgeVerdict {
        score: if sketch { 1.0 } else { 0.0 },
        mode: JudgeMode::Binary,
        source: JudgeSource::Rule,
    }
}

/// Graded variant: half the score for structural compliance, half for
/// staying short relative to the total-token budget.
pub fn rule_judge_dense(
    thinking: &str,
    config: &RuleJudgeConfig,
    tokenizer: &Tokenizer,
) -> JudgeVerdict {
    let form = if form_compliant(thinking, config, tokenizer) {
        1.0
    } else {
        0.0
    };
    let total = tokenizer.count(thinking) as f64;
    let brevity = (1.0 - total / config.max_total_tokens as f64).max(0.0);
    JudgeVerdict {
        score: 0.5 * form + 0.5 * brevity,
        mode: JudgeMode::Dense,
        source: JudgeSource::Rule,
    }
}

/// Fill the `[THINKING]` slot of the scoring template. The slot is
/// substituted positionally, exactly once, so an argument containing the
/// literal slot text does not recurse.
pub fn render_judge_prompt(thinking: &str) -> String {
    let slot = JUDGE_PROMPT_TEMPLATE
        .rfind("[THINKING]")
        .expect("template has a slot");
    format!("{}{}", &JUDGE_PROMPT_TEMPLATE[..slot], thinking)
}

/// Parse the first numeric literal in a judge reply.
pub fn parse_score_reply(reply: &str) -> Result<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\d+(\.\d+)?|\.\d+").unwrap());
    let m = re.find(reply).ok_or_else(|| Error::UnparseableReply {
        raw: reply.to_string(),
    })?;
    m.as_str().parse::<f64>().map_err(|_| Error::UnparseableReply {
        raw: reply.to_string(),
    })
}

fn clamp_to_mode(score: f64, mode: JudgeMode) -> f64 {
    let clamped = score.clamp(0.0, 1.0);
    match mode {
        JudgeMode::Binary => clamped.round(),
        JudgeMode::Dense => clamped,
    }
}

/// Chat-endpoint settings for the external judge and the LLM converter.
/// The auth token is read from the environment, never from config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub token_env: String,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            base_url: "http://localhost:8080/v1/chat/completions".into(),
            model: "sketch-judge".into(),
            timeout_secs: 30,
            max_retries: 2,
            retry_backoff_ms: 250,
            token_env: "SKETCH_RL_API_TOKEN".into(),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

/// Blocking HTTP chat client with bounded retries and exponential backoff.
pub struct LlmClient {
    config: LlmClientConfig,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn new(config: LlmClientConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(LlmClient { config, http })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    /// Send one user message and return the reply text.
    pub fn chat(&self, content: &str) -> Result<String> {
        let request = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content,
            }],
        };
        let token = std::env::var(&self.config.token_env).ok();

        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.retry_backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let mut builder = self.http.post(&self.config.base_url).json(&request);
            if let Some(token) = &token {
                builder = builder.bearer_auth(token);
            }
            match builder.send() {
                Ok(response) if response.status().is_success() => {
                    let body: ChatResponse =
                        response.json().map_err(|e| Error::Transport(e.to_string()))?;
                    let reply = body
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| Error::Transport("reply with no choices".into()))?;
                    return Ok(reply);
                }
                Ok(response) => {
                    last_err = format!("http status {}", response.status());
                }
                Err(e) => {
                    last_err = e.to_string();
                }
            }
        }
        Err(Error::Transport(format!(
            "{} after {} attempts: {}",
            self.config.base_url,
            self.config.max_retries + 1,
            last_err
        )))
    }
}

/// Score a thinking process through the external chat judge.
pub fn external_judge(client: &LlmClient, thinking: &str, mode: JudgeMode) -> Result<JudgeVerdict> {
    let mut prompt = render_judge_prompt(thinking);
    if mode == JudgeMode::Dense {
        prompt.push_str(DENSE_SUFFIX);
    }
    let reply = client.chat(&prompt)?;
    let score = parse_score_reply(&reply)?;
    Ok(JudgeVerdict {
        score: clamp_to_mode(score, mode),
        mode,
        source: JudgeSource::External,
    })
}

/// Uniform judge interface consumed by the reward module.
pub trait Judge: Sync {
    fn score(&self, thinking: &str) -> Result<JudgeVerdict>;
}

/// Offline judge backed by `rule_judge` / `rule_judge_dense`.
#[derive(Debug, Clone)]
pub struct RuleJudge {
    pub config: RuleJudgeConfig,
    pub tokenizer: Tokenizer,
    pub mode: JudgeMode,
}

impl RuleJudge {
    pub fn binary(config: RuleJudgeConfig, tokenizer: Tokenizer) -> Self {
        RuleJudge {
            config,
            tokenizer,
            mode: JudgeMode::Binary,
        }
    }
}

impl Judge for RuleJudge {
    fn score(&self, thinking: &str) -> Result<JudgeVerdict> {
        Ok(match self.mode {
            JudgeMode::Binary => rule_judge(thinking, &self.config, &self.tokenizer),
            JudgeMode::Dense => rule_judge_dense(thinking, &self.config, &self.tokenizer),
        })
    }
}

/// Judge backed by the external chat endpoint.
pub struct ExternalJudge {
    pub client: LlmClient,
    pub mode: JudgeMode,
}

impl Judge for ExternalJudge {
    fn score(&self, thinking: &str) -> Result<JudgeVerdict> {
        external_judge(&self.client, thinking, self.mode)
    }
}

/// Pair of reasoning texts for one source record: the original long form and
/// its sketch rewrite. Input to the judge-dataset builder.
pub struct ReasoningPair<'a> {
    pub id: &'a str,
    pub long: &'a str,
    pub sketch: &'a str,
}

/// Build the judge fine-tuning dataset: two examples per record, the long
/// side labeled 0 and the sketch side labeled 1, in input order.
pub fn build_judge_dataset(pairs: &[ReasoningPair<'_>]) -> Result<Vec<JudgeExample>> {
    let mut out = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        if pair.long.trim().is_empty() || pair.sketch.trim().is_empty() {
            return Err(Error::Data(format!(
                "record {} has an empty reasoning field",
                pair.id
            )));
        }
        out.push(JudgeExample {
            thinking: pair.long.to_string(),
            label: 0,
            origin_id: pair.id.to_string(),
        });
        out.push(JudgeExample {
            thinking: pair.sketch.to_string(),
            label: 1,
            origin_id: pair.id.to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VANUATU_SKETCH: &str = "1. In Pacific Islands.\n2. Near Australia, Papua New Guinea, New Zealand\n3. Likely Vanuatu.\n4. Dispute with France.\n5. Dashed box marks dispute.";
    const VANUATU_LONG: &str = "The highlighted country is within the Pacific Islands region. Based on its position relative to neighboring larger landmasses like Australia and nearby countries such as Papua New Guinea and New Zealand, the highlighted country aligns with the location of Vanuatu. According to the context, Vanuatu has a territorial dispute over Matthew and Hunter Islands, claimed by both Vanuatu and France. Therefore, the presence of a dashed box labeled \"Disputed island\" suggests the inclusion of this dispute in the overview of the country's territories.";

    fn default_judge_inputs() -> (RuleJudgeConfig, Tokenizer) {
        (RuleJudgeConfig::default(), Tokenizer::Whitespace)
    }

    #[test]
    fn sketch_example_scores_one() {
        let (config, tok) = default_judge_inputs();
        assert_eq!(rule_judge(VANUATU_SKETCH, &config, &tok).score, 1.0);
    }

    #[test]
    fn long_paragraph_scores_zero() {
        let (config, tok) = default_judge_inputs();
        assert_eq!(rule_judge(VANUATU_LONG, &config, &tok).score, 0.0);
    }

    #[test]
    fn empty_thinking_scores_zero() {
        let (config, tok) = default_judge_inputs();
        assert_eq!(rule_judge("", &config, &tok).score, 0.0);
    }

    #[test]
    fn too_many_total_tokens_scores_zero() {
        let (config, tok) = default_judge_inputs();
        let step = "1. one two three four five six seven eight nine ten\n";
        let thinking = step.repeat(13);
        assert!(tok.count(&thinking) > config.max_total_tokens);
        assert_eq!(rule_judge(&thinking, &config, &tok).score, 0.0);
    }

    #[test]
    fn verbose_steps_score_zero() {
        let (config, tok) = default_judge_inputs();
        let thinking = "1. one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen\n2. one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen";
        assert_eq!(rule_judge(thinking, &config, &tok).score, 0.0);
    }

    #[test]
    fn dense_score_blends_form_and_brevity() {
        let (config, tok) = default_judge_inputs();
        // 60 tokens across 6 numbered steps of 10 tokens each.
        let thinking = (1..=6)
            .map(|i| format!("{i}. a b c d e f g h i"))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(tok.count(&thinking), 60);
        let verdict = rule_judge_dense(&thinking, &config, &tok);
        assert!((verdict.score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn binary_verdict_is_deterministic_across_threads() {
        let (config, tok) = default_judge_inputs();
        let baseline = rule_judge(VANUATU_SKETCH, &config, &tok).score;
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let config = config.clone();
                std::thread::spawn(move || {
                    (0..50)
                        .map(|_| rule_judge(VANUATU_SKETCH, &config, &Tokenizer::Whitespace).score)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for score in handle.join().unwrap() {
                assert_eq!(score, baseline);
            }
        }
    }

    #[test]
    fn judge_prompt_substitutes_at_slot() {
        let rendered = render_judge_prompt("x");
        assert!(rendered.ends_with("score this thinking process: x"));
        assert!(rendered.starts_with("Give a score of 1 for sketch-style thinking"));

        let empty = render_judge_prompt("");
        assert!(empty.ends_with("score this thinking process: "));

        let tricky = render_judge_prompt("[THINKING]");
        assert_eq!(tricky, JUDGE_PROMPT_TEMPLATE);
        assert_eq!(tricky.matches("[THINKING]").count(), 1);
    }

    #[test]
    fn score_reply_parsing() {
        assert_eq!(parse_score_reply("1").unwrap(), 1.0);
        assert_eq!(parse_score_reply("Score: 0.7").unwrap(), 0.7);
        assert_eq!(parse_score_reply("the score is .5 overall").unwrap(), 0.5);
        assert!(matches!(
            parse_score_reply("sketchy"),
            Err(Error::UnparseableReply { .. })
        ));
    }

    #[test]
    fn binary_mode_rounds_and_clamps() {
        assert_eq!(clamp_to_mode(0.7, JudgeMode::Binary), 1.0);
        assert_eq!(clamp_to_mode(0.2, JudgeMode::Binary), 0.0);
        assert_eq!(clamp_to_mode(7.0, JudgeMode::Binary), 1.0);
        assert_eq!(clamp_to_mode(0.7, JudgeMode::Dense), 0.7);
        assert_eq!(clamp_to_mode(-3.0, JudgeMode::Dense), 0.0);
    }

    #[test]
    fn judge_dataset_doubles_and_balances() {
        let pairs: Vec<(String, String, String)> = (0..20)
            .map(|i| {
                (
                    format!("rec-{i}"),
                    format!("a long detailed reasoning paragraph number {i}"),
                    format!("1. short {i}.\n2. done."),
                )
            })
            .collect();
        let borrowed: Vec<ReasoningPair> = pairs
            .iter()
            .map(|(id, long, sketch)| ReasoningPair {
                id,
                long,
                sketch,
            })
            .collect();
        let examples = build_judge_dataset(&borrowed).unwrap();
        assert_eq!(examples.len(), 40);
        assert_eq!(examples.iter().filter(|e| e.label == 0).count(), 20);
        assert_eq!(examples.iter().filter(|e| e.label == 1).count(), 20);
        // Order stable: long then sketch per record, records in input order.
        assert_eq!(examples[0].origin_id, "rec-0");
        assert_eq!(examples[0].label, 0);
        assert_eq!(examples[1].label, 1);
        assert_eq!(examples[38].origin_id, "rec-19");
    }

    #[test]
    fn judge_dataset_rejects_empty_reasoning() {
        let err = build_judge_dataset(&[ReasoningPair {
            id: "bad-record",
            long: " ",
            sketch: "1. x.",
        }])
        .unwrap_err();
        assert!(err.to_string().contains("bad-record"));
    }

    #[test]
    fn single_record_yields_both_labels() {
        let examples = build_judge_dataset(&[ReasoningPair {
            id: "r",
            long: "long text",
            sketch: "1. s.",
        }])
        .unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!((examples[0].label, examples[1].label), (0, 1));
        assert!(build_judge_dataset(&[]).unwrap().is_empty());
    }
}
