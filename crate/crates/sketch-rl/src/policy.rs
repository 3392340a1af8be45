//! Desk-scale parametric policies standing in for the LMM backbone.
//!
//! Two kinds share one interface. The template policy puts a softmax over a
//! finite per-question candidate bank, which makes optimization dynamics
//! transparent. The token-level policy is a tabular next-token model
//! conditioned on (question, previous token), exercising the per-token
//! structure of the objectives. Both expose exact log-probabilities,
//! seeded sampling, and analytic gradients of log-probability with respect
//! to the logits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{parse_response, FormatSpec, Question, Tokenizer, Trace};
use crate::error::{Error, Result};
use crate::judge::{rule_judge, RuleJudgeConfig};
use crate::rewards::{accuracy_reward, RewardComponents};

/// Style classification of a candidate's thinking, per the rule judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    Sketch,
    Normal,
}

/// One bank entry with annotations recomputed on load.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub raw: String,
    pub trace: Trace,
    pub is_correct: bool,
    pub is_well_formed: bool,
    pub style: Style,
    pub thinking_tokens: usize,
}

/// On-disk bank record. Annotations are never trusted from disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankRecord {
    pub question_id: String,
    pub response_raw: String,
}

/// Per-question candidate responses defining the template policy's support.
#[derive(Debug, Clone)]
pub struct CandidateBank {
    entries: BTreeMap<String, Vec<Candidate>>,
}

impl CandidateBank {
    /// Annotate raw records against their questions. Every question must
    /// have at least two candidates.
    pub fn build(
        records: &[BankRecord],
        questions: &[Question],
        format: &FormatSpec,
        judge_config: &RuleJudgeConfig,
        tokenizer: &Tokenizer,
    ) -> Result<Self> {
        let by_id: BTreeMap<&str, &Question> =
            questions.iter().map(|q| (q.id.as_str(), q)).collect();
        let mut entries: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
        for record in records {
            let question = by_id
                .get(record.question_id.as_str())
                .ok_or_else(|| Error::UnknownQuestion(record.question_id.clone()))?;
            let trace = parse_response(&record.response_raw, format);
            let style = if rule_judge(&trace.thinking, judge_config, tokenizer).score == 1.0 {
                Style::Sketch
            } else {
                Style::Normal
            };
            let candidate = Candidate {
                raw: record.response_raw.clone(),
                is_correct: accuracy_reward(&trace, question) == 1.0,
                is_well_formed: trace.well_formed,
                style,
                thinking_tokens: tokenizer.count(&trace.thinking),
                trace,
            };
            entries
                .entry(record.question_id.clone())
                .or_default()
                .push(candidate);
        }
        for question in questions {
            match entries.get(&question.id) {
                Some(cands) if cands.len() >= 2 => {}
                Some(_) => {
                    return Err(Error::Data(format!(
                        "question {} has fewer than 2 bank candidates",
                        question.id
                    )))
                }
                None => {
                    return Err(Error::Data(format!(
                        "question {} has no bank entry",
                        question.id
                    )))
                }
            }
        }
        Ok(CandidateBank { entries })
    }

    pub fn load(
        path: &Path,
        questions: &[Question],
        format: &FormatSpec,
        judge_config: &RuleJudgeConfig,
        tokenizer: &Tokenizer,
    ) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: BankRecord = serde_json::from_str(line).map_err(|e| {
                Error::Data(format!(
                    "{}:{}: bad bank record: {}",
                    path.display(),
                    lineno + 1,
                    e
                ))
            })?;
            records.push(record);
        }
        Self::build(&records, questions, format, judge_config, tokenizer)
    }

    pub fn candidates(&self, question_id: &str) -> Result<&[Candidate]> {
        self.entries
            .get(question_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))
    }

    pub fn question_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Questions missing one of the candidate classes each reward channel
    /// needs to act on (correct+sketch, correct+normal, incorrect,
    /// malformed). Informational: special-purpose banks omit classes on
    /// purpose.
    pub fn coverage_gaps(&self) -> BTreeMap<String, Vec<&'static str>> {
        let mut gaps = BTreeMap::new();
        for (id, cands) in &self.entries {
            let mut missing = Vec::new();
            if !cands.iter().any(|c| c.is_correct && c.style == Style::Sketch) {
                missing.push("correct+sketch");
            }
            if !cands.iter().any(|c| c.is_correct && c.style == Style::Normal) {
                missing.push("correct+normal");
            }
            if !cands.iter().any(|c| !c.is_correct && c.is_well_formed) {
                missing.push("incorrect");
            }
            if !cands.iter().any(|c| !c.is_well_formed) {
                missing.push("malformed");
            }
            if !missing.is_empty() {
                gaps.insert(id.clone(), missing);
            }
        }
        gaps
    }
}

/// Whitespace-token vocabulary for the token-level policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for text in texts {
            for token in text.split_whitespace() {
                seen.insert(token.to_string());
            }
        }
        let tokens: Vec<String> = seen.into_iter().collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Rebuild the lookup index after deserialization.
    fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Softmax policy over each question's candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePolicy {
    logits: BTreeMap<String, Vec<f64>>,
}

/// Tabular next-token policy. Row 0 of each question table is the
/// start-of-response context; row 1+i conditions on vocabulary token i.
/// Column j scores token j and the final column scores the end marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPolicy {
    vocab: Vocab,
    tables: BTreeMap<String, Vec<Vec<f64>>>,
    pub max_sample_tokens: usize,
}

/// A policy parameter snapshot. Cloning yields an independent snapshot, so
/// the same type serves as current, old, and reference policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyParams {
    Template(TemplatePolicy),
    TokenLevel(TokenPolicy),
}

/// Sparse gradient with the same row layout as the policy it was taken
/// from. Only touched questions are materialized.
#[derive(Debug, Clone, Default)]
pub struct GradTable {
    template_rows: BTreeMap<String, Vec<f64>>,
    token_tables: BTreeMap<String, Vec<Vec<f64>>>,
}

impl GradTable {
    pub fn new() -> Self {
        GradTable::default()
    }

    pub fn template_row(&self, question_id: &str) -> Option<&[f64]> {
        self.template_rows.get(question_id).map(Vec::as_slice)
    }

    pub fn token_table(&self, question_id: &str) -> Option<&[Vec<f64>]> {
        self.token_tables.get(question_id).map(Vec::as_slice)
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.template_rows.values_mut() {
            for v in row {
                *v *= factor;
            }
        }
        for table in self.token_tables.values_mut() {
            for row in table {
                for v in row {
                    *v *= factor;
                }
            }
        }
    }

    pub fn add(&mut self, other: &GradTable) {
        for (id, row) in &other.template_rows {
            let dst = self
                .template_rows
                .entry(id.clone())
                .or_insert_with(|| vec![0.0; row.len()]);
            for (d, s) in dst.iter_mut().zip(row) {
                *d += s;
            }
        }
        for (id, table) in &other.token_tables {
            let dst = self.token_tables.entry(id.clone()).or_insert_with(|| {
                table.iter().map(|row| vec![0.0; row.len()]).collect()
            });
            for (drow, srow) in dst.iter_mut().zip(table) {
                for (d, s) in drow.iter_mut().zip(srow) {
                    *d += s;
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0f64;
        for row in self.template_rows.values() {
            for v in row {
                m = m.max(v.abs());
            }
        }
        for table in self.token_tables.values() {
            for row in table {
                for v in row {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }
}

/// Stable log-softmax of a logits row at a temperature.
pub fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(temperature > 0.0);
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + scaled
            .iter()
            .map(|x| (x - max).exp())
            .sum::<f64>()
            .ln();
    scaled.iter().map(|x| x - lse).collect()
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    log_softmax(logits, temperature)
        .into_iter()
        .map(f64::exp)
        .collect()
}

fn draw_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// One sampled response with its per-step log-probabilities under the
/// three policy snapshots and its reward annotations. Totals are the sums
/// of the step lists.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub response_raw: String,
    /// Candidate index for template-policy rollouts.
    pub candidate_index: Option<usize>,
    pub logp_theta_steps: Vec<f64>,
    pub logp_old_steps: Vec<f64>,
    pub logp_ref_steps: Vec<f64>,
    pub trace: Trace,
    pub components: RewardComponents,
    pub reward_total: f64,
}

impl Rollout {
    pub fn logp_theta(&self) -> f64 {
        self.logp_theta_steps.iter().sum()
    }

    pub fn logp_old(&self) -> f64 {
        self.logp_old_steps.iter().sum()
    }

    pub fn logp_ref(&self) -> f64 {
        self.logp_ref_steps.iter().sum()
    }

    pub fn thinking_tokens(&self, tokenizer: &Tokenizer) -> usize {
        tokenizer.count(&self.trace.thinking)
    }
}

impl PolicyParams {
    /// Uniform template policy over the bank's candidates.
    pub fn template_uniform(bank: &CandidateBank) -> Result<Self> {
        let mut logits = BTreeMap::new();
        for id in bank.question_ids() {
            let k = bank.candidates(id)?.len();
            logits.insert(id.to_string(), vec![0.0; k]);
        }
        Ok(PolicyParams::Template(TemplatePolicy { logits }))
    }

    /// Uniform token-level policy over a vocabulary, one table per question.
    pub fn token_uniform<'a>(
        vocab: Vocab,
        question_ids: impl IntoIterator<Item = &'a str>,
        max_sample_tokens: usize,
    ) -> Self {
        let rows = vocab.len() + 1;
        let cols = vocab.len() + 1;
        let tables = question_ids
            .into_iter()
            .map(|id| (id.to_string(), vec![vec![0.0; cols]; rows]))
            .collect();
        PolicyParams::TokenLevel(TokenPolicy {
            vocab,
            tables,
            max_sample_tokens,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PolicyParams::Template(_) => "template",
            PolicyParams::TokenLevel(_) => "token_level",
        }
    }

    pub fn as_template(&self) -> Option<&TemplatePolicy> {
        match self {
            PolicyParams::Template(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&TokenPolicy> {
        match self {
            PolicyParams::TokenLevel(t) => Some(t),
            _ => None,
        }
    }

    /// All logits finite and table shapes consistent.
    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match self {
            PolicyParams::Template(t) => {
                for (id, row) in &t.logits {
                    if !finite(row) {
                        return Err(Error::NonFinite(format!("template logits for {id}")));
                    }
                }
            }
            PolicyParams::TokenLevel(t) => {
                let rows = t.vocab.len() + 1;
                let cols = t.vocab.len() + 1;
                for (id, table) in &t.tables {
                    if table.len() != rows || table.iter().any(|r| r.len() != cols) {
                        return Err(Error::Data(format!(
                            "token table for {id} has inconsistent shape"
                        )));
                    }
                    for row in table {
                        if !finite(row) {
                            return Err(Error::NonFinite(format!("token logits for {id}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-step log-probabilities of a response. Template responses have a
    /// single step; token-level responses have one step per token plus the
    /// end marker.
    pub fn step_logprobs(
        &self,
        bank: &CandidateBank,
        question_id: &str,
        response: &str,
        temperature: f64,
    ) -> Result<Vec<f64>> {
        if temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        match self {
            PolicyParams::Template(t) => {
                let row = t
                    .logits
                    .get(question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))?;
                let candidates = bank.candidates(question_id)?;
                let k = candidates
                    .iter()
                    .position(|c| c.raw == response)
                    .ok_or_else(|| Error::UnsupportedResponse {
                        question_id: question_id.to_string(),
                        response: response.to_string(),
                    })?;
                Ok(vec![log_softmax(row, temperature)[k]])
            }
            PolicyParams::TokenLevel(t) => {
                let table = t
                    .tables
                    .get(question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))?;
                let end = t.vocab.len();
                let mut ctx = 0usize;
                let mut steps = Vec::new();
                for token in response.split_whitespace() {
                    let id = t.vocab.id(token).ok_or_else(|| Error::UnsupportedResponse {
                        question_id: question_id.to_string(),
                        response: format!("token {token:?} outside vocabulary in {response:?}"),
                    })?;
                    steps.push(log_softmax(&table[ctx], temperature)[id]);
                    ctx = id + 1;
                }
                steps.push(log_softmax(&table[ctx], temperature)[end]);
                Ok(steps)
            }
        }
    }

    /// Exact log-probability of a response under the temperature-scaled
    /// softmax.
    pub fn logprob(
        &self,
        bank: &CandidateBank,
        question_id: &str,
        response: &str,
        temperature: f64,
    ) -> Result<f64> {
        Ok(self
            .step_logprobs(bank, question_id, response, temperature)?
            .iter()
            .sum())
    }

    /// Analytic gradient of `logprob` with respect to the logits,
    /// accumulated into `grad` with coefficient `coef`.
    pub fn accumulate_logprob_gradient(
        &self,
        bank: &CandidateBank,
        question_id: &str,
        response: &str,
        temperature: f64,
        coef: f64,
        grad: &mut GradTable,
    ) -> Result<()> {
        match self {
            PolicyParams::Template(t) => {
                let row = t
                    .logits
                    .get(question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))?;
                let candidates = bank.candidates(question_id)?;
                let k = candidates
                    .iter()
                    .position(|c| c.raw == response)
                    .ok_or_else(|| Error::UnsupportedResponse {
                        question_id: question_id.to_string(),
                        response: response.to_string(),
                    })?;
                let probs = softmax(row, temperature);
                let dst = grad
                    .template_rows
                    .entry(question_id.to_string())
                    .or_insert_with(|| vec![0.0; row.len()]);
                for (j, p) in probs.iter().enumerate() {
                    let one_hot = if j == k { 1.0 } else { 0.0 };
                    dst[j] += coef * (one_hot - p) / temperature;
                }
                Ok(())
            }
            PolicyParams::TokenLevel(t) => {
                let table = t
                    .tables
                    .get(question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))?;
                let end = t.vocab.len();
                let dst = grad.token_tables.entry(question_id.to_string()).or_insert_with(|| {
                    table.iter().map(|row| vec![0.0; row.len()]).collect()
                });
                let mut ctx = 0usize;
                let mut emit = |ctx: usize, chosen: usize, dst: &mut Vec<Vec<f64>>| {
                    let probs = softmax(&table[ctx], temperature);
                    for (j, p) in probs.iter().enumerate() {
                        let one_hot = if j == chosen { 1.0 } else { 0.0 };
                        dst[ctx][j] += coef * (one_hot - p) / temperature;
                    }
                };
                for token in response.split_whitespace() {
                    let id = t.vocab.id(token).ok_or_else(|| Error::UnsupportedResponse {
                        question_id: question_id.to_string(),
                        response: format!("token {token:?} outside vocabulary in {response:?}"),
                    })?;
                    emit(ctx, id, dst);
                    ctx = id + 1;
                }
                emit(ctx, end, dst);
                Ok(())
            }
        }
    }

    /// Gradient of `logprob` as a standalone table.
    pub fn logprob_gradient(
        &self,
        bank: &CandidateBank,
        question_id: &str,
        response: &str,
        temperature: f64,
    ) -> Result<GradTable> {
        let mut grad = GradTable::new();
        self.accumulate_logprob_gradient(bank, question_id, response, temperature, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Draw `n` independent responses for a question. Deterministic given
    /// the seed. Each rollout carries its log-probs under this (sampling)
    /// snapshot in all three slots; the trainer overwrites theta/ref.
    pub fn sample(
        &self,
        bank: &CandidateBank,
        question: &Question,
        format: &FormatSpec,
        temperature: f64,
        n: usize,
        rng_seed: u64,
    ) -> Result<Vec<Rollout>> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        if temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut rollouts = Vec::with_capacity(n);
        match self {
            PolicyParams::Template(t) => {
                let row = t
                    .logits
                    .get(&question.id)
                    .ok_or_else(|| Error::UnknownQuestion(question.id.clone()))?;
                let candidates = bank.candidates(&question.id)?;
                let logps = log_softmax(row, temperature);
                let probs: Vec<f64> = logps.iter().map(|lp| lp.exp()).collect();
                for _ in 0..n {
                    let k = draw_index(&probs, &mut rng);
                    let candidate = &candidates[k];
                    let steps = vec![logps[k]];
                    rollouts.push(Rollout {
                        response_raw: candidate.raw.clone(),
                        candidate_index: Some(k),
                        logp_theta_steps: steps.clone(),
                        logp_old_steps: steps.clone(),
                        logp_ref_steps: steps,
                        trace: candidate.trace.clone(),
                        components: RewardComponents {
                            accuracy: 0.0,
                            format: 0.0,
                            style: 0.0,
                        },
                        reward_total: 0.0,
                    });
                }
            }
            PolicyParams::TokenLevel(t) => {
                let table = t
                    .tables
                    .get(&question.id)
                    .ok_or_else(|| Error::UnknownQuestion(question.id.clone()))?;
                let end = t.vocab.len();
                for _ in 0..n {
                    let mut ctx = 0usize;
                    let mut tokens: Vec<&str> = Vec::new();
                    let mut steps = Vec::new();
                    loop {
                        let logps = log_softmax(&table[ctx], temperature);
                        if tokens.len() >= t.max_sample_tokens {
                            // Length cap: stop at the end marker, scoring
                            // the forced step honestly.
                            steps.push(logps[end]);
                            break;
                        }
                        let probs: Vec<f64> = logps.iter().map(|lp| lp.exp()).collect();
                        let choice = draw_index(&probs, &mut rng);
                        steps.push(logps[choice]);
                        if choice == end {
                            break;
                        }
                        tokens.push(t.vocab.token(choice));
                        ctx = choice + 1;
                    }
                    let raw = tokens.join(" ");
                    let trace = parse_response(&raw, format);
                    rollouts.push(Rollout {
                        response_raw: raw,
                        candidate_index: None,
                        logp_theta_steps: steps.clone(),
                        logp_old_steps: steps.clone(),
                        logp_ref_steps: steps,
                        trace,
                        components: RewardComponents {
                            accuracy: 0.0,
                            format: 0.0,
                            style: 0.0,
                        },
                        reward_total: 0.0,
                    });
                }
            }
        }
        Ok(rollouts)
    }

    /// Greedy (argmax) response for a question; ties break toward the
    /// lowest index.
    pub fn greedy_response(&self, bank: &CandidateBank, question_id: &str) -> Result<String> {
        fn argmax(vals: &[f64]) -> usize {
            let mut best = 0;
            for (i, v) in vals.iter().enumerate() {
                if *v > vals[best] {
                    best = i;
                }
            }
            best
        }
        match self {
            PolicyParams::Template(t) => {
                let row = t
                    .logits
                    .get(question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))?;
                let candidates = bank.candidates(question_id)?;
                Ok(candidates[argmax(row)].raw.clone())
            }
            PolicyParams::TokenLevel(t) => {
                let table = t
                    .tables
                    .get(question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.to_string()))?;
                let end = t.vocab.len();
                let mut ctx = 0usize;
                let mut tokens: Vec<&str> = Vec::new();
                loop {
                    let choice = argmax(&table[ctx]);
                    if choice == end || tokens.len() >= t.max_sample_tokens {
                        break;
                    }
                    tokens.push(t.vocab.token(choice));
                    ctx = choice + 1;
                }
                Ok(tokens.join(" "))
            }
        }
    }

    /// One gradient-ascent step: logits += lr * grad.
    pub fn apply_gradient_ascent(&mut self, grad: &GradTable, learning_rate: f64) {
        match self {
            PolicyParams::Template(t) => {
                for (id, src) in &grad.template_rows {
                    if let Some(dst) = t.logits.get_mut(id) {
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += learning_rate * s;
                        }
                    }
                }
            }
            PolicyParams::TokenLevel(t) => {
                for (id, src) in &grad.token_tables {
                    if let Some(dst) = t.tables.get_mut(id) {
                        for (drow, srow) in dst.iter_mut().zip(src) {
                            for (d, s) in drow.iter_mut().zip(srow) {
                                *d += learning_rate * s;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Multiplicative decay of every logit: logits *= (1 - factor).
    pub fn apply_weight_decay(&mut self, factor: f64) {
        if factor == 0.0 {
            return;
        }
        let shrink = 1.0 - factor;
        match self {
            PolicyParams::Template(t) => {
                for row in t.logits.values_mut() {
                    for v in row {
                        *v *= shrink;
                    }
                }
            }
            PolicyParams::TokenLevel(t) => {
                for table in t.tables.values_mut() {
                    for row in table {
                        for v in row {
                            *v *= shrink;
                        }
                    }
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Data(format!("params serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut params: PolicyParams =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("params file: {e}")))?;
        if let PolicyParams::TokenLevel(t) = &mut params {
            t.vocab.reindex();
        }
        params.validate()?;
        Ok(params)
    }
}

impl TemplatePolicy {
    pub fn logits(&self, question_id: &str) -> Option<&[f64]> {
        self.logits.get(question_id).map(Vec::as_slice)
    }

    pub fn logits_mut(&mut self, question_id: &str) -> Option<&mut Vec<f64>> {
        self.logits.get_mut(question_id)
    }

    pub fn question_ids(&self) -> impl Iterator<Item = &str> {
        self.logits.keys().map(String::as_str)
    }

    /// Selection probability of one candidate at a temperature.
    pub fn probability(&self, question_id: &str, index: usize, temperature: f64) -> Option<f64> {
        self.logits
            .get(question_id)
            .map(|row| softmax(row, temperature)[index])
    }
}

impl TokenPolicy {
    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn table(&self, question_id: &str) -> Option<&[Vec<f64>]> {
        self.tables.get(question_id).map(Vec::as_slice)
    }

    pub fn table_mut(&mut self, question_id: &str) -> Option<&mut Vec<Vec<f64>>> {
        self.tables.get_mut(question_id)
    }

    pub fn question_ids(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }
}
