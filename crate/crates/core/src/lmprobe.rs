//! Probing a language model's knowledge state.
//!
//! A model "knows" a statement at threshold ε when it puts probability at
//! least 1-ε on the statement's continuation given its prompt. Because the
//! candidate continuations of one prompt share probability mass, two
//! mutually exclusive completions can never both be known at any ε below
//! one half — raising an edited fact necessarily shrinks its rivals.
//!
//! `LmClient` abstracts the model: `MockLm` replays a JSON fixture
//! (deterministic, offline), `HttpLm` speaks a completions-style HTTP API
//! with echo-mode scoring. The metric layer on top measures knowledge
//! (`knows`, `in_ict_closure`) and certainty (`certainty_max`,
//! `certainty_sampled`, `uncertainty_report`).

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("the endpoint rejected the prompt as too long: {0}")]
    ContextTooLong(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("no scored entry for prompt {prompt:?} with continuation {continuation:?}")]
    MissingFixture { prompt: String, continuation: String },
    #[error("no sample entries for prompt {prompt:?}")]
    MissingSamples { prompt: String },
    #[error("no token starts at the prompt/continuation boundary (byte {boundary})")]
    TokenizationMismatch { boundary: usize },
    #[error("knowledge threshold must lie in [0, 0.5), got {0}")]
    InvalidThreshold(f64),
    #[error("no candidates to choose among")]
    EmptyCandidates,
    #[error("the continuation must be nonempty")]
    EmptyContinuation,
    #[error("sample count must be positive")]
    InvalidSampleCount,
}

/// One prompt/continuation pair that verifies a knowledge item.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Probe {
    /// Prompt text.
    pub x: String,
    /// Expected continuation; must be nonempty to score.
    pub y: String,
    /// The knowledge item this pair verifies.
    pub label: String,
}

/// Sampling controls for `LmClient::sample`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            temperature: 1.0,
            max_tokens: 64,
        }
    }
}

/// A language model that can score fixed text and sample completions.
/// Implementations tolerate concurrent calls.
pub trait LmClient: Sync {
    /// Per-token log-probabilities of `continuation` given `prompt`.
    fn score(&self, prompt: &str, continuation: &str) -> Result<Vec<f64>, ProbeError>;

    /// One sampled completion of `prompt`: its text and per-token
    /// log-probabilities.
    fn sample(&self, prompt: &str, params: &SampleParams)
        -> Result<(String, Vec<f64>), ProbeError>;
}

// ---------- mock client ----------

#[derive(Debug, Deserialize)]
struct Fixture {
    #[serde(default)]
    scores: Vec<ScoreEntry>,
    #[serde(default)]
    samples: Vec<SampleEntry>,
}

#[derive(Debug, Deserialize)]
struct ScoreEntry {
    prompt: String,
    continuation: String,
    logprobs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct SampleEntry {
    prompt: String,
    text: String,
    logprobs: Vec<f64>,
}

/// Deterministic offline client backed by a JSON fixture:
///
/// ```json
/// {"scores":  [{"prompt": "...", "continuation": "...", "logprobs": [-0.1]}],
///  "samples": [{"prompt": "...", "text": "...", "logprobs": [-0.5, -0.2]}]}
/// ```
///
/// Scoring requires an exact (prompt, continuation) entry. Sampling at
/// temperature zero always returns a prompt's first entry; any other
/// temperature cycles through its entries in fixture order.
pub struct MockLm {
    scores: HashMap<(String, String), Vec<f64>>,
    samples: HashMap<String, Vec<(String, Vec<f64>)>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl MockLm {
    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        let fixture: Fixture =
            serde_json::from_str(text).map_err(|e| ProbeError::Fixture(e.to_string()))?;
        let mut scores = HashMap::new();
        for entry in fixture.scores {
            scores.insert((entry.prompt, entry.continuation), entry.logprobs);
        }
        let mut samples: HashMap<String, Vec<(String, Vec<f64>)>> = HashMap::new();
        for entry in fixture.samples {
            samples
                .entry(entry.prompt)
                .or_default()
                .push((entry.text, entry.logprobs));
        }
        Ok(MockLm {
            scores,
            samples,
            cursors: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ProbeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProbeError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl LmClient for MockLm {
    fn score(&self, prompt: &str, continuation: &str) -> Result<Vec<f64>, ProbeError> {
        self.scores
            .get(&(prompt.to_string(), continuation.to_string()))
            .cloned()
            .ok_or_else(|| ProbeError::MissingFixture {
                prompt: prompt.to_string(),
                continuation: continuation.to_string(),
            })
    }

    fn sample(
        &self,
        prompt: &str,
        params: &SampleParams,
    ) -> Result<(String, Vec<f64>), ProbeError> {
        let entries = self
            .samples
            .get(prompt)
            .ok_or_else(|| ProbeError::MissingSamples {
                prompt: prompt.to_string(),
            })?;
        let index = if params.temperature == 0.0 {
            0
        } else {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let cursor = cursors.entry(prompt.to_string()).or_insert(0);
            let index = *cursor % entries.len();
            *cursor += 1;
            index
        };
        Ok(entries[index].clone())
    }
}

// ---------- HTTP client ----------

/// Counting gate bounding simultaneous in-flight requests.
struct InFlightGate {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct GatePass<'a>(&'a InFlightGate);

impl InFlightGate {
    fn new(cap: usize) -> Self {
        InFlightGate {
            count: Mutex::new(0),
            freed: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) -> GatePass<'_> {
        let mut count = self.count.lock().expect("gate lock");
        while *count >= self.cap {
            count = self.freed.wait(count).expect("gate lock");
        }
        *count += 1;
        GatePass(self)
    }
}

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        let mut count = self.0.count.lock().expect("gate lock");
        *count -= 1;
        self.0.freed.notify_one();
    }
}

/// Client for a completions-style HTTP endpoint. Scoring uses echo mode
/// (the prompt and continuation are sent as one text, zero new tokens,
/// log-probabilities echoed back) and keeps only the tokens at or past the
/// prompt/continuation boundary; a token straddling the boundary is a
/// `TokenizationMismatch`. Transient failures (connection errors, 429,
/// 5xx) are retried with exponential backoff; simultaneous requests are
/// capped (default 4).
pub struct HttpLm {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    max_attempts: u32,
    gate: InFlightGate,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    logprobs: u32,
    echo: bool,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    logprobs: Option<LogprobBlock>,
}

#[derive(Deserialize)]
struct LogprobBlock {
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    text_offset: Vec<usize>,
}

impl HttpLm {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpLm {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("default TLS backend is available"),
            max_attempts: 3,
            gate: InFlightGate::new(4),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Caps simultaneous in-flight requests (minimum 1).
    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.gate = InFlightGate::new(cap);
        self
    }

    fn post(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProbeError> {
        let mut delay = Duration::from_millis(200);
        let mut last_error = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let mut builder = self.client.post(&self.endpoint).json(request);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            let _pass = self.gate.acquire();
            match builder.send() {
                Err(e) => last_error = format!("request failed: {e}"),
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json()
                            .map_err(|e| ProbeError::Endpoint(format!("bad response body: {e}")));
                    }
                    let body = response.text().unwrap_or_default();
                    // A prompt over the model's window is not retryable and
                    // deserves its own error.
                    if status.as_u16() == 413
                        || (status.as_u16() == 400
                            && body.to_ascii_lowercase().contains("context"))
                    {
                        return Err(ProbeError::ContextTooLong(body));
                    }
                    last_error = format!("status {status}: {body}");
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(ProbeError::Endpoint(last_error))
    }

    fn first_choice(response: CompletionResponse) -> Result<Choice, ProbeError> {
        response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProbeError::Endpoint("response carried no choices".to_string()))
    }
}

/// Picks the continuation tokens out of an echoed scoring response: those
/// starting at or after `boundary` (the prompt's byte length). Exactness
/// matters — if no token starts at the boundary the tokenizer merged text
/// across it and the scores cannot be attributed.
fn continuation_logprobs(
    boundary: usize,
    text_offset: &[usize],
    token_logprobs: &[Option<f64>],
) -> Result<Vec<f64>, ProbeError> {
    let start = text_offset.partition_point(|&offset| offset < boundary);
    if start == text_offset.len() {
        // No continuation tokens at all: acceptable only for an empty
        // continuation, which callers reject earlier anyway.
        return Ok(Vec::new());
    }
    if text_offset[start] != boundary {
        return Err(ProbeError::TokenizationMismatch { boundary });
    }
    token_logprobs[start..]
        .iter()
        .map(|lp| {
            lp.ok_or_else(|| {
                ProbeError::Endpoint("echoed token is missing its log-probability".to_string())
            })
        })
        .collect()
}

impl LmClient for HttpLm {
    fn score(&self, prompt: &str, continuation: &str) -> Result<Vec<f64>, ProbeError> {
        let full = format!("{prompt}{continuation}");
        let response = self.post(&CompletionRequest {
            model: &self.model,
            prompt: &full,
            max_tokens: 0,
            temperature: 0.0,
            logprobs: 0,
            echo: true,
        })?;
        let choice = Self::first_choice(response)?;
        let block = choice
            .logprobs
            .ok_or_else(|| ProbeError::Endpoint("response carried no logprobs".to_string()))?;
        if block.text_offset.len() != block.token_logprobs.len() {
            return Err(ProbeError::Endpoint(
                "token offsets and log-probabilities disagree in length".to_string(),
            ));
        }
        continuation_logprobs(prompt.len(), &block.text_offset, &block.token_logprobs)
    }

    fn sample(
        &self,
        prompt: &str,
        params: &SampleParams,
    ) -> Result<(String, Vec<f64>), ProbeError> {
        let response = self.post(&CompletionRequest {
            model: &self.model,
            prompt,
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            logprobs: 0,
            echo: false,
        })?;
        let choice = Self::first_choice(response)?;
        let logprobs = match choice.logprobs {
            None => Vec::new(),
            Some(block) => block
                .token_logprobs
                .into_iter()
                .map(|lp| {
                    lp.ok_or_else(|| {
                        ProbeError::Endpoint(
                            "sampled token is missing its log-probability".to_string(),
                        )
                    })
                })
                .collect::<Result<Vec<f64>, ProbeError>>()?,
        };
        Ok((choice.text, logprobs))
    }
}

// ---------- metrics ----------

fn total_probability(logprobs: &[f64]) -> f64 {
    logprobs.iter().sum::<f64>().exp()
}

/// Probability the model assigns `continuation` after `prompt`: exp of the
/// summed per-token log-probabilities (a product of token probabilities).
pub fn sequence_probability(
    client: &dyn LmClient,
    prompt: &str,
    continuation: &str,
) -> Result<f64, ProbeError> {
    if continuation.is_empty() {
        return Err(ProbeError::EmptyContinuation);
    }
    Ok(total_probability(&client.score(prompt, continuation)?))
}

/// Length-normalized variant: exp of the mean log-probability (geometric
/// mean of token probabilities). Useful when comparing continuations of
/// very different token counts.
pub fn normalized_sequence_probability(
    client: &dyn LmClient,
    prompt: &str,
    continuation: &str,
) -> Result<f64, ProbeError> {
    if continuation.is_empty() {
        return Err(ProbeError::EmptyContinuation);
    }
    let logprobs = client.score(prompt, continuation)?;
    if logprobs.is_empty() {
        return Ok(1.0);
    }
    Ok((logprobs.iter().sum::<f64>() / logprobs.len() as f64).exp())
}

fn check_epsilon(epsilon: f64) -> Result<(), ProbeError> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(ProbeError::InvalidThreshold(epsilon));
    }
    Ok(())
}

/// How probabilities of several probes of one item combine into the
/// item's probability.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Aggregation {
    /// Best phrasing wins.
    #[default]
    Max,
    /// Arithmetic mean over phrasings.
    Mean,
    /// One seeded uniform draw among the phrasings.
    Sample { seed: u64 },
}

/// Whether the model puts probability at least 1-ε on the probe's
/// continuation. ε must lie in [0, 0.5): past one half, two incompatible
/// statements could count as known at once.
pub fn knows(client: &dyn LmClient, probe: &Probe, epsilon: f64) -> Result<bool, ProbeError> {
    check_epsilon(epsilon)?;
    Ok(sequence_probability(client, &probe.x, &probe.y)? >= 1.0 - epsilon)
}

/// `knows` over several probes of one item, their probabilities combined
/// by `aggregation` (max by default).
pub fn knows_aggregate(
    client: &dyn LmClient,
    probes: &[Probe],
    epsilon: f64,
    aggregation: Aggregation,
) -> Result<bool, ProbeError> {
    check_epsilon(epsilon)?;
    if probes.is_empty() {
        return Err(ProbeError::EmptyCandidates);
    }
    let aggregate = match aggregation {
        Aggregation::Max => {
            let mut best = f64::NEG_INFINITY;
            for probe in probes {
                best = best.max(sequence_probability(client, &probe.x, &probe.y)?);
            }
            best
        }
        Aggregation::Mean => {
            let mut total = 0.0;
            for probe in probes {
                total += sequence_probability(client, &probe.x, &probe.y)?;
            }
            total / probes.len() as f64
        }
        Aggregation::Sample { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probe = &probes[rng.gen_range(0..probes.len())];
            sequence_probability(client, &probe.x, &probe.y)?
        }
    };
    Ok(aggregate >= 1.0 - epsilon)
}

/// Serializes a knowledge context for probing: texts joined by newlines,
/// followed by the probe prompt on its own line. An empty context is the
/// bare prompt.
pub fn serialize_context(context: &[String], prompt: &str) -> String {
    if context.is_empty() {
        prompt.to_string()
    } else {
        format!("{}\n{prompt}", context.join("\n"))
    }
}

/// Whether the probe is known once `context` (knowledge texts, one per
/// line) is prepended to its prompt — knowledge in the in-context state
/// rather than the bare model.
pub fn in_ict_closure(
    client: &dyn LmClient,
    context: &[String],
    probe: &Probe,
    epsilon: f64,
) -> Result<bool, ProbeError> {
    check_epsilon(epsilon)?;
    let prompt = serialize_context(context, &probe.x);
    Ok(sequence_probability(client, &prompt, &probe.y)? >= 1.0 - epsilon)
}

/// The candidate continuation the model prefers: index of the highest
/// sequence probability (first wins ties) and that probability.
pub fn certainty_max(
    client: &dyn LmClient,
    query: &str,
    candidates: &[String],
) -> Result<(usize, f64), ProbeError> {
    if candidates.is_empty() {
        return Err(ProbeError::EmptyCandidates);
    }
    let mut best = 0;
    let mut best_probability = f64::NEG_INFINITY;
    for (index, candidate) in candidates.iter().enumerate() {
        let probability = sequence_probability(client, query, candidate)?;
        if probability > best_probability {
            best = index;
            best_probability = probability;
        }
    }
    Ok((best, best_probability))
}

/// Mean total log-likelihood over `n` sampled completions — a sampled
/// estimate of how concentrated the model's continuation distribution is.
pub fn certainty_sampled(
    client: &dyn LmClient,
    prompt: &str,
    n: usize,
    params: &SampleParams,
) -> Result<f64, ProbeError> {
    if n == 0 {
        return Err(ProbeError::InvalidSampleCount);
    }
    let mut total = 0.0;
    for _ in 0..n {
        let (_, logprobs) = client.sample(prompt, params)?;
        total += logprobs.iter().sum::<f64>();
    }
    Ok(total / n as f64)
}

// ---------- uncertainty report ----------

/// One query to measure before and after edits: its answer candidates and
/// the edit texts to prepend one at a time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintyCase {
    pub id: String,
    pub query: String,
    pub candidates: Vec<String>,
    /// (edit id, edit text) pairs, each prepended separately.
    #[serde(default)]
    pub edits: Vec<(String, String)>,
}

/// Maximum answer probability with one edit prepended; empty when that
/// measurement failed.
#[derive(Clone, Debug, Serialize)]
pub struct PostMeasurement {
    pub edit_id: String,
    pub probability: Option<f64>,
}

/// Pre/post certainty for one query; a failed measurement leaves its slot
/// empty and records the first error.
#[derive(Clone, Debug, Serialize)]
pub struct CertaintyRow {
    pub id: String,
    /// Maximum answer probability with no context.
    pub pre: Option<f64>,
    /// One measurement per edit in the case.
    pub post: Vec<PostMeasurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// How each query's maximum answer probability moves when edits are
/// prepended. Cases and measurements fail independently: one bad fixture
/// entry or endpoint hiccup flags its own slot and leaves the rest intact.
pub fn uncertainty_report(client: &dyn LmClient, cases: &[UncertaintyCase]) -> Vec<CertaintyRow> {
    cases
        .iter()
        .map(|case| {
            let mut error: Option<String> = None;
            let mut measure = |query: &str| -> Option<f64> {
                match certainty_max(client, query, &case.candidates) {
                    Ok((_, probability)) => Some(probability.clamp(0.0, 1.0)),
                    Err(e) => {
                        error.get_or_insert_with(|| e.to_string());
                        None
                    }
                }
            };
            let pre = measure(&case.query);
            let post = case
                .edits
                .iter()
                .map(|(edit_id, edit_text)| PostMeasurement {
                    edit_id: edit_id.clone(),
                    probability: measure(&serialize_context(
                        std::slice::from_ref(edit_text),
                        &case.query,
                    )),
                })
                .collect();
            CertaintyRow {
                id: case.id.clone(),
                pre,
                post,
                error,
            }
        })
        .collect()
}


#[cfg(test)]
mod metric_tests {
    use super::*;

    fn lm(entries: &[(&str, &str, &[f64])]) -> MockLm {
        let scores: Vec<serde_json::Value> = entries
            .iter()
            .map(|(p, c, lp)| {
                serde_json::json!({"prompt": p, "continuation": c, "logprobs": lp})
            })
            .collect();
        MockLm::from_json(&serde_json::json!({ "scores": scores }).to_string()).unwrap()
    }

    fn probe(x: &str, y: &str) -> Probe {
        Probe {
            x: x.to_string(),
            y: y.to_string(),
            label: y.trim().to_string(),
        }
    }

    #[test]
    fn sequence_probability_multiplies_token_probabilities() {
        let lm = lm(&[
            ("x", "y", &[0.5f64.ln(), 0.5f64.ln()]),
            ("x", "z", &[0.0]),
            ("x", "long", &[0.9f64.ln(), 0.4f64.ln()]),
        ]);
        let p = sequence_probability(&lm, "x", "y").unwrap();
        assert!((p - 0.25).abs() < 1e-12);
        assert_eq!(sequence_probability(&lm, "x", "z").unwrap(), 1.0);
        let n = normalized_sequence_probability(&lm, "x", "long").unwrap();
        assert!((n - (0.9f64 * 0.4).sqrt()).abs() < 1e-12);
        assert!(matches!(
            sequence_probability(&lm, "x", "").unwrap_err(),
            ProbeError::EmptyContinuation
        ));
    }

    #[test]
    fn knows_compares_against_one_minus_epsilon() {
        let lm = lm(&[("x", "y", &[0.8f64.ln()])]);
        assert!(knows(&lm, &probe("x", "y"), 0.25).unwrap());
        assert!(!knows(&lm, &probe("x", "y"), 0.05).unwrap());
    }

    #[test]
    fn knows_rejects_bad_thresholds_and_empty_continuations() {
        let lm = lm(&[("x", "y", &[-0.1])]);
        for bad in [-0.01, 0.5, 0.7, f64::NAN] {
            assert!(matches!(
                knows(&lm, &probe("x", "y"), bad),
                Err(ProbeError::InvalidThreshold(_))
            ));
        }
        assert!(matches!(
            knows(&lm, &probe("x", ""), 0.1),
            Err(ProbeError::EmptyContinuation)
        ));
    }

    #[test]
    fn aggregation_modes_combine_phrasings() {
        let lm = lm(&[
            ("x1", "y", &[0.2f64.ln()]),
            ("x2", "y", &[0.95f64.ln()]),
        ]);
        let probes = vec![probe("x1", "y"), probe("x2", "y")];
        // Max: the better phrasing crosses the threshold.
        assert!(knows_aggregate(&lm, &probes, 0.1, Aggregation::Max).unwrap());
        // Mean: (0.2 + 0.95) / 2 = 0.575 < 0.9.
        assert!(!knows_aggregate(&lm, &probes, 0.1, Aggregation::Mean).unwrap());
        assert!(knows_aggregate(&lm, &probes, 0.45, Aggregation::Mean).unwrap());
        // Sample: seeded, deterministic, and lands on one of the two.
        let sampled = knows_aggregate(&lm, &probes, 0.1, Aggregation::Sample { seed: 9 }).unwrap();
        let again = knows_aggregate(&lm, &probes, 0.1, Aggregation::Sample { seed: 9 }).unwrap();
        assert_eq!(sampled, again);
        assert!(matches!(
            knows_aggregate(&lm, &[], 0.1, Aggregation::Max),
            Err(ProbeError::EmptyCandidates)
        ));
    }

    #[test]
    fn context_prepends_with_newlines() {
        let lm = lm(&[
            ("fact one\nfact two\nx", "y", &[0.99f64.ln()]),
            ("x", "y", &[0.01f64.ln()]),
        ]);
        let context = vec!["fact one".to_string(), "fact two".to_string()];
        assert!(in_ict_closure(&lm, &context, &probe("x", "y"), 0.1).unwrap());
        // Empty context reduces to bare knows.
        assert!(!in_ict_closure(&lm, &[], &probe("x", "y"), 0.1).unwrap());
    }

    #[test]
    fn certainty_max_picks_the_argmax_and_breaks_ties_first() {
        let lm = lm(&[
            ("x", "a", &[0.3f64.ln()]),
            ("x", "b", &[0.6f64.ln()]),
            ("x", "c", &[0.6f64.ln()]),
        ]);
        let candidates: Vec<String> =
            ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (index, probability) = certainty_max(&lm, "x", &candidates).unwrap();
        assert_eq!(index, 1);
        assert!((probability - 0.6).abs() < 1e-12);
        assert!(matches!(
            certainty_max(&lm, "x", &[]),
            Err(ProbeError::EmptyCandidates)
        ));
    }

    #[test]
    fn certainty_sampled_averages_total_log_likelihoods() {
        let samples: Vec<serde_json::Value> = [
            vec![-1.0],
            vec![-2.0],
            vec![-1.5, -1.5],
            vec![-1.0],
            vec![-3.0],
        ]
        .iter()
        .map(|lp| serde_json::json!({"prompt": "q", "text": "t", "logprobs": lp}))
        .collect();
        let lm =
            MockLm::from_json(&serde_json::json!({ "samples": samples }).to_string()).unwrap();
        let mean = certainty_sampled(&lm, "q", 5, &SampleParams::default()).unwrap();
        assert!((mean - (-2.0)).abs() < 1e-12);
        assert!(matches!(
            certainty_sampled(&lm, "q", 0, &SampleParams::default()),
            Err(ProbeError::InvalidSampleCount)
        ));
    }

    #[test]
    fn uncertainty_report_measures_pre_and_per_edit_post() {
        let lm = lm(&[
            ("where?", "rome", &[0.7f64.ln()]),
            ("where?", "oslo", &[0.2f64.ln()]),
            ("moved to oslo\nwhere?", "rome", &[0.4f64.ln()]),
            ("moved to oslo\nwhere?", "oslo", &[0.5f64.ln()]),
        ]);
        let cases = vec![UncertaintyCase {
            id: "city".to_string(),
            query: "where?".to_string(),
            candidates: vec!["rome".to_string(), "oslo".to_string()],
            edits: vec![("e1".to_string(), "moved to oslo".to_string())],
        }];
        let rows = uncertainty_report(&lm, &cases);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].pre.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(rows[0].post.len(), 1);
        assert!((rows[0].post[0].probability.unwrap() - 0.5).abs() < 1e-12);
        assert!(rows[0].error.is_none());
    }

    #[test]
    fn uncertainty_report_flags_partial_failures() {
        let lm = lm(&[("who?", "x", &[0.8f64.ln()])]);
        let cases = vec![UncertaintyCase {
            id: "broken-post".to_string(),
            query: "who?".to_string(),
            candidates: vec!["x".to_string()],
            edits: vec![("e1".to_string(), "edit".to_string())],
        }];
        let rows = uncertainty_report(&lm, &cases);
        assert!(rows[0].pre.is_some());
        assert_eq!(rows[0].post.len(), 1);
        assert!(rows[0].post[0].probability.is_none());
        assert!(rows[0].error.is_some());

        // No edits: post list empty, pre still measured.
        let cases = vec![UncertaintyCase {
            id: "no-edits".to_string(),
            query: "who?".to_string(),
            candidates: vec!["x".to_string()],
            edits: vec![],
        }];
        let rows = uncertainty_report(&lm, &cases);
        assert!(rows[0].pre.is_some());
        assert!(rows[0].post.is_empty());
    }
}

#[cfg(test)]
mod span_tests {
    use super::*;

    #[test]
    fn continuation_tokens_start_at_the_boundary() {
        // "Hello world" scored with prompt "Hello": tokens at 0, 5.
        let lp = continuation_logprobs(5, &[0, 5], &[None, Some(-0.7)]).unwrap();
        assert_eq!(lp, vec![-0.7]);
    }

    #[test]
    fn straddling_tokens_are_a_mismatch() {
        // A token covering bytes 3..8 swallows the boundary at 5.
        let err = continuation_logprobs(5, &[0, 3, 8], &[None, Some(-0.1), Some(-0.2)])
            .unwrap_err();
        assert!(matches!(
            err,
            ProbeError::TokenizationMismatch { boundary: 5 }
        ));
    }

    #[test]
    fn missing_logprobs_in_the_span_are_endpoint_errors() {
        let err = continuation_logprobs(5, &[0, 5], &[Some(-0.1), None]).unwrap_err();
        assert!(matches!(err, ProbeError::Endpoint(_)));
        // Prompt-side null (position 0) is fine.
        assert!(continuation_logprobs(5, &[0, 5], &[None, Some(-0.2)]).is_ok());
    }

    #[test]
    fn empty_span_is_empty_scores() {
        assert_eq!(
            continuation_logprobs(11, &[0, 5], &[None, Some(-0.2)]).unwrap(),
            Vec::<f64>::new()
        );
    }

    #[test]
    fn gate_releases_on_drop() {
        let gate = InFlightGate::new(1);
        drop(gate.acquire());
        // A second acquire succeeds only if the first pass released.
        drop(gate.acquire());
        assert_eq!(*gate.count.lock().unwrap(), 0);
    }
}

#[cfg(test)]
mod http_tests {
    use super::*;
    use std::io::{Read as _, Write as _};
    use std::net::TcpListener;

    /// Minimal one-connection-per-response HTTP server for exercising the
    /// client without a network.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buffer = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buffer.extend_from_slice(&chunk[..n]);
                    if n == 0 {
                        break;
                    }
                    let text = String::from_utf8_lossy(&buffer);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|line| {
                                let (name, value) = line.split_once(':')?;
                                name.eq_ignore_ascii_case("content-length")
                                    .then(|| value.trim().parse::<usize>().ok())?
                            })
                            .unwrap_or(0);
                        if buffer.len() >= header_end + 4 + content_length {
                            break;
                        }
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} RESPONSE\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, handle)
    }

    fn echo_body() -> String {
        serde_json::json!({
            "choices": [{
                "text": "The capital is Paris",
                "logprobs": {
                    "tokens": ["The", " capital", " is", " Paris"],
                    "token_logprobs": [null, -0.9, -0.4, -0.2],
                    "text_offset": [0, 3, 11, 14]
                }
            }]
        })
        .to_string()
    }

    #[test]
    fn scoring_extracts_the_continuation_span() {
        let (url, handle) = serve(vec![(200, echo_body())]);
        let lm = HttpLm::new(url, "test-model");
        let lp = lm.score("The capital is", " Paris").unwrap();
        assert_eq!(lp, vec![-0.2]);
        handle.join().unwrap();
    }

    #[test]
    fn transient_failures_are_retried() {
        let (url, handle) = serve(vec![
            (500, "{\"error\": \"flaky\"}".to_string()),
            (200, echo_body()),
        ]);
        let lm = HttpLm::new(url, "test-model");
        let lp = lm.score("The capital is", " Paris").unwrap();
        assert_eq!(lp, vec![-0.2]);
        handle.join().unwrap();
    }

    #[test]
    fn client_errors_fail_fast() {
        let (url, handle) = serve(vec![(401, "{\"error\": \"no key\"}".to_string())]);
        let lm = HttpLm::new(url, "test-model");
        let err = lm.score("x", "y").unwrap_err();
        assert!(matches!(err, ProbeError::Endpoint(_)));
        assert!(err.to_string().contains("401"));
        handle.join().unwrap();
    }

    #[test]
    fn oversized_contexts_get_their_own_error() {
        let (url, handle) = serve(vec![(
            400,
            "{\"error\": \"maximum context length exceeded\"}".to_string(),
        )]);
        let lm = HttpLm::new(url, "test-model");
        let err = lm.score("very long prompt", "y").unwrap_err();
        assert!(matches!(err, ProbeError::ContextTooLong(_)));
        handle.join().unwrap();
    }

    #[test]
    fn sampling_returns_text_and_logprobs() {
        let body = serde_json::json!({
            "choices": [{
                "text": " Paris, of course.",
                "logprobs": {
                    "token_logprobs": [-0.3, -0.8],
                    "text_offset": [0, 6]
                }
            }]
        })
        .to_string();
        let (url, handle) = serve(vec![(200, body)]);
        let lm = HttpLm::new(url, "test-model");
        let (text, lp) = lm.sample("Name a capital:", &SampleParams::default()).unwrap();
        assert_eq!(text, " Paris, of course.");
        assert_eq!(lp, vec![-0.3, -0.8]);
        handle.join().unwrap();
    }
}
