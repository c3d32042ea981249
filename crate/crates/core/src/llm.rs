//! LLM access for the prediction and error-analysis roles: an
//! Ollama-compatible HTTP backend, a deterministic mock, and a scripted
//! replay backend for tests, plus prompt construction and numeric
//! extraction from free-text responses.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::DescriptorVector;
use crate::dataset::SolubilityRecord;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error talking to backend: {0}")]
    TransportError(String),
    #[error("backend request timed out: {0}")]
    Timeout(String),
    #[error("malformed backend response: {0}")]
    MalformedBackendResponse(String),
    #[error("scripted backend ran out of responses")]
    ScriptExhausted,
    #[error("no numeric value found in response")]
    NoNumericValue,
    #[error("extracted value {0} is outside the plausible logS window [{min}, {max}]", min = PLAUSIBLE_MIN, max = PLAUSIBLE_MAX)]
    ImplausibleValue(f64),
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Ollama,
    Mock,
    Scripted,
}

/// Environment variable overriding `base_url` for Ollama backends.
pub const BASE_URL_ENV: &str = "SOLCOT_BACKEND_URL";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub seed: u64,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: "http://localhost:11434".into(),
            model_name: "deepseek-r1:14b".into(),
            temperature: 0.0,
            seed: 0,
            timeout_secs: 120.0,
            max_retries: 3,
        }
    }
}

/// One prompt/response round trip, recorded verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt: String,
    pub response: String,
    pub latency_secs: f64,
    pub backend: BackendConfig,
}

/// Append-only JSONL log of exchanges.
pub struct ExchangeLog {
    file: Mutex<std::fs::File>,
}

impl ExchangeLog {
    pub fn create(path: &std::path::Path) -> Result<ExchangeLog, LlmError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        Ok(ExchangeLog {
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, exchange: &LlmExchange) -> Result<(), LlmError> {
        let line = serde_json::to_string(exchange)
            .map_err(|e| LlmError::MalformedBackendResponse(e.to_string()))?;
        let mut file = self.file.lock().expect("log lock");
        writeln!(file, "{line}")?;
        Ok(())
    }
}

enum Inner {
    Ollama(reqwest::blocking::Client),
    Mock,
    Scripted(Mutex<VecDeque<String>>),
}

/// A ready-to-call backend built from a [`BackendConfig`].
pub struct Backend {
    config: BackendConfig,
    inner: Inner,
}

impl Backend {
    /// Build an Ollama or mock backend. The `SOLCOT_BACKEND_URL` env var,
    /// when set, overrides the configured base URL.
    pub fn new(mut config: BackendConfig) -> Result<Backend, LlmError> {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                config.base_url = url.trim().to_string();
            }
        }
        let inner = match config.kind {
            BackendKind::Mock => Inner::Mock,
            BackendKind::Scripted => Inner::Scripted(Mutex::new(VecDeque::new())),
            BackendKind::Ollama => {
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs_f64(config.timeout_secs))
                    .build()
                    .map_err(|e| LlmError::TransportError(e.to_string()))?;
                Inner::Ollama(client)
            }
        };
        Ok(Backend { config, inner })
    }

    /// A scripted backend replaying `responses` in order; the N+1-th call
    /// fails with `ScriptExhausted`.
    pub fn scripted(responses: Vec<String>) -> Backend {
        Backend {
            config: BackendConfig {
                kind: BackendKind::Scripted,
                ..BackendConfig::default()
            },
            inner: Inner::Scripted(Mutex::new(responses.into())),
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn generate(&self, prompt: &str) -> Result<LlmExchange, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = Instant::now();
        let response = match &self.inner {
            Inner::Mock => mock_response(prompt, self.config.seed),
            Inner::Scripted(queue) => {
                let mut queue = queue.lock().expect("script lock");
                queue.pop_front().ok_or(LlmError::ScriptExhausted)?
            }
            Inner::Ollama(client) => self.generate_ollama(client, prompt)?,
        };
        let latency_secs = match self.config.kind {
            BackendKind::Ollama => started.elapsed().as_secs_f64(),
            _ => 0.0, // deterministic backends report zero latency
        };
        Ok(LlmExchange {
            prompt: prompt.to_string(),
            response,
            latency_secs,
            backend: self.config.clone(),
        })
    }

    fn generate_ollama(
        &self,
        client: &reqwest::blocking::Client,
        prompt: &str,
    ) -> Result<String, LlmError> {
        let url = format!("{}/api/generate", self.config.base_url.trim_end_matches('/'));
        let body = GenerateRequest {
            model: &self.config.model_name,
            prompt,
            stream: false,
            options: GenerateOptions {
                temperature: self.config.temperature,
                seed: self.config.seed,
            },
        };

        let mut last_error = LlmError::TransportError("no attempts made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = Duration::from_millis(100u64.saturating_mul(1 << (attempt - 1)))
                    .min(Duration::from_secs(2));
                std::thread::sleep(backoff);
            }
            match client.post(&url).json(&body).send() {
                Ok(response) => {
                    let status = response.status();
                    if !status.is_success() {
                        last_error = LlmError::TransportError(format!("http status {status}"));
                        continue;
                    }
                    let text = response
                        .text()
                        .map_err(|e| LlmError::MalformedBackendResponse(e.to_string()))?;
                    let parsed: GenerateResponse = serde_json::from_str(&text).map_err(|e| {
                        LlmError::MalformedBackendResponse(format!(
                            "{e} in body {}",
                            text.chars().take(200).collect::<String>()
                        ))
                    })?;
                    return Ok(parsed.response);
                }
                Err(err) if err.is_timeout() => {
                    last_error = LlmError::Timeout(err.to_string());
                }
                Err(err) => {
                    last_error = LlmError::TransportError(err.to_string());
                }
            }
        }
        Err(last_error)
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
    options: GenerateOptions,
}

#[derive(Serialize)]
struct GenerateOptions {
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    response: String,
}

/// Deterministic mock: the reply value is a pure function of
/// (prompt, seed), mapped into a plausible logS range.
fn mock_response(prompt: &str, seed: u64) -> String {
    let mut hash: u64 = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for byte in prompt.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    let value = -8.0 + (hash % 8001) as f64 / 1000.0; // [-8.000, 0.000]
    format!(
        "Considering the descriptor profile against the known examples, \
         the molecule's polarity and size suggest the estimate below.\n\
         PREDICTION: {value:.3}"
    )
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

/// Count descriptors read as integers; continuous ones keep a decimal
/// point (so a zero TPSA renders as `0.0`).
fn format_feature(name: &str, value: f64) -> String {
    let count_valued = matches!(
        name,
        "NumHAcceptors"
            | "NumHDonors"
            | "NumRotatableBonds"
            | "HeavyAtomCount"
            | "NumAromaticRings"
            | "RingCount"
    );
    if count_valued && value.fract() == 0.0 {
        format!("{}", value as i64)
    } else {
        format!("{value:?}")
    }
}

fn descriptor_lines(d: &DescriptorVector) -> String {
    let values = d.as_array();
    DescriptorVector::FEATURE_NAMES
        .iter()
        .zip(values.iter())
        .map(|(name, value)| format!("{name}: {}", format_feature(name, *value)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn descriptor_inline(d: &DescriptorVector) -> String {
    let values = d.as_array();
    DescriptorVector::FEATURE_NAMES
        .iter()
        .zip(values.iter())
        .map(|(name, value)| format!("{name}={}", format_feature(name, *value)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Build the prediction prompt: task framing, known examples, nearest
/// seed molecules with similarity scores, the condensed error-analysis
/// digest (omitted when empty), the target descriptors, and the output
/// contract line.
pub fn build_prediction_prompt(
    known: &[(&SolubilityRecord, &DescriptorVector)],
    neighbors: &[(&SolubilityRecord, f64)],
    corpus_digest: &str,
    target: &DescriptorVector,
) -> String {
    let mut prompt = String::new();
    prompt.push_str(
        "You are an expert chemist estimating aqueous solubility. \
         Predict log10 solubility in mol/L (logS) for the target molecule.\n\n",
    );

    prompt.push_str("Known molecules (descriptors -> measured logS):\n");
    for (record, descriptors) in known {
        prompt.push_str(&format!(
            "- {}: {} -> logS = {:?}\n",
            record.name,
            descriptor_inline(descriptors),
            record.log_s
        ));
    }

    if !neighbors.is_empty() {
        prompt.push_str("\nMost similar known molecules to the target (Tanimoto):\n");
        for (record, similarity) in neighbors {
            prompt.push_str(&format!(
                "- {} (similarity {similarity:.3}): logS = {:?}\n",
                record.name, record.log_s
            ));
        }
    }

    if !corpus_digest.is_empty() {
        prompt.push_str("\nLessons from earlier prediction attempts:\n");
        prompt.push_str(corpus_digest);
        if !corpus_digest.ends_with('\n') {
            prompt.push('\n');
        }
    }

    prompt.push_str("\nTarget molecule descriptors:\n");
    prompt.push_str(&descriptor_lines(target));
    prompt.push_str(
        "\n\nThink through the relevant structure-property relationships, \
         then answer with exactly one final line of the form:\n\
         PREDICTION: <number>\n",
    );
    prompt
}

/// Build the error-analysis prompt handed to the analyzer role after a
/// prediction missed.
pub fn build_error_analysis_prompt(
    molecule_name: &str,
    predicted: f64,
    actual: f64,
    deviation_pct: f64,
    descriptors: &DescriptorVector,
) -> String {
    format!(
        "A solubility prediction for {molecule_name} missed the measured value.\n\
         predicted logS: {predicted:?}\n\
         actual logS: {actual:?}\n\
         deviation: {deviation_pct:.1}%\n\n\
         Molecule descriptors:\n{}\n\n\
         In at most 5 sentences, state which structural or descriptor \
         factors were mis-weighted (for example aromatic ring count, \
         hydrogen-bond donors, LogP) and how the estimate should shift.\n",
        descriptor_lines(descriptors)
    )
}

// ---------------------------------------------------------------------------
// Numeric extraction
// ---------------------------------------------------------------------------

pub const PLAUSIBLE_MIN: f64 = -15.0;
pub const PLAUSIBLE_MAX: f64 = 5.0;

/// Pull the predicted logS out of a free-text response: the first
/// `PREDICTION: <number>` line wins (case-insensitive); otherwise the last
/// standalone number in the text. Values outside [-15, +5] are rejected.
pub fn extract_numeric_prediction(response: &str) -> Result<f64, LlmError> {
    // Unicode minus signs show up in model output; normalize them.
    let text: String = response.replace('\u{2212}', "-");
    let lower = text.to_lowercase();

    if let Some(tag_start) = lower.find("prediction") {
        let after_tag = &text[tag_start + "prediction".len()..];
        let after_colon = after_tag
            .trim_start()
            .strip_prefix(':')
            .unwrap_or(after_tag);
        if let Some(value) = first_number(after_colon) {
            return check_plausible(value);
        }
    }

    match last_standalone_number(&text) {
        Some(value) => check_plausible(value),
        None => Err(LlmError::NoNumericValue),
    }
}

fn check_plausible(value: f64) -> Result<f64, LlmError> {
    if !(PLAUSIBLE_MIN..=PLAUSIBLE_MAX).contains(&value) {
        return Err(LlmError::ImplausibleValue(value));
    }
    Ok(value)
}

/// First number in the text, allowing sign, decimals, and exponents.
fn first_number(text: &str) -> Option<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit()
            || ((chars[i] == '-' || chars[i] == '+')
                && i + 1 < chars.len()
                && chars[i + 1].is_ascii_digit())
        {
            let (value, _) = scan_number(&chars, i)?;
            return Some(value);
        }
        if !chars[i].is_whitespace() && chars[i] != ':' && chars[i] != '*' && chars[i] != '=' {
            // a non-numeric token interposes; keep searching anyway
        }
        i += 1;
    }
    None
}

/// Last number that stands alone (not glued to letters, as in `C7H14`).
fn last_standalone_number(text: &str) -> Option<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut result = None;
    let mut i = 0;
    while i < chars.len() {
        let starts_number = chars[i].is_ascii_digit()
            || ((chars[i] == '-' || chars[i] == '+')
                && i + 1 < chars.len()
                && chars[i + 1].is_ascii_digit());
        if starts_number {
            let preceded_by_letter = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '.');
            if let Some((value, end)) = scan_number(&chars, i) {
                let followed_by_letter = end < chars.len() && chars[end].is_alphanumeric();
                if !preceded_by_letter && !followed_by_letter {
                    result = Some(value);
                }
                i = end;
                continue;
            }
        }
        i += 1;
    }
    result
}

/// Scan one number starting at `start`; returns (value, end index).
fn scan_number(chars: &[char], start: usize) -> Option<(f64, usize)> {
    let mut end = start;
    if chars[end] == '-' || chars[end] == '+' {
        end += 1;
    }
    let digits_start = end;
    while end < chars.len() && chars[end].is_ascii_digit() {
        end += 1;
    }
    if end == digits_start {
        return None;
    }
    if end < chars.len() && chars[end] == '.' {
        let mut frac = end + 1;
        while frac < chars.len() && chars[frac].is_ascii_digit() {
            frac += 1;
        }
        if frac > end + 1 {
            end = frac;
        }
    }
    if end < chars.len() && (chars[end] == 'e' || chars[end] == 'E') {
        let mut exp = end + 1;
        if exp < chars.len() && (chars[exp] == '-' || chars[exp] == '+') {
            exp += 1;
        }
        let exp_digits = exp;
        while exp < chars.len() && chars[exp].is_ascii_digit() {
            exp += 1;
        }
        if exp > exp_digits {
            end = exp;
        }
    }
    let token: String = chars[start..end].iter().collect();
    token.parse::<f64>().ok().map(|v| (v, end))
}

// ---------------------------------------------------------------------------
// Corpus condensation
// ---------------------------------------------------------------------------

/// One summarized corpus item feeding the digest.
#[derive(Debug, Clone)]
pub struct DigestItem {
    pub molecule_id: String,
    pub deviation_pct: Option<f64>,
    pub analysis: String,
}

/// Greedy newest-first packing of one-line summaries into `budget`
/// characters. Items arrive oldest-first; the digest keeps the newest.
pub fn condense_corpus(items: &[DigestItem], budget: usize) -> String {
    assert!(budget >= 256, "digest budget must be at least 256");
    let mut lines: Vec<String> = Vec::new();
    let mut used = 0usize;
    for item in items.iter().rev() {
        let excerpt = first_sentence(&item.analysis, 160);
        let line = match item.deviation_pct {
            Some(dev) => format!(
                "- {}: final deviation {dev:.1}%{}{}",
                item.molecule_id,
                if excerpt.is_empty() { "" } else { ", " },
                excerpt
            ),
            None => format!(
                "- {}: no parsable prediction{}{}",
                item.molecule_id,
                if excerpt.is_empty() { "" } else { ", " },
                excerpt
            ),
        };
        let cost = line.chars().count() + 1; // newline
        if used + cost > budget {
            break;
        }
        used += cost;
        lines.push(line);
    }
    lines.join("\n")
}

fn first_sentence(text: &str, max_chars: usize) -> String {
    let trimmed = text.trim();
    let sentence = match trimmed.find('.') {
        Some(i) => &trimmed[..=i],
        None => trimmed,
    };
    let mut out: String = sentence.chars().take(max_chars).collect();
    out = out.replace('\n', " ");
    out
}
