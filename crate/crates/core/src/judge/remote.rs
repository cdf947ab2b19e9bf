//! Remote text-completion client.
//!
//! Wire contract (JSON over HTTP, one POST per completion):
//! request `{"prompt": string, "temperature": number, "max_tokens": int}`,
//! response `{"text": string}`. The same contract serves prediction,
//! auto-rating, and review generation, so the client knows nothing
//! about prompts.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{JudgeError, PredictionOutcome, Predictor};
use crate::corpus::{MultipleChoiceQuestion, TemplateId};

const BACKOFF_BASE: Duration = Duration::from_millis(50);
const BACKOFF_CAP: Duration = Duration::from_secs(2);

/// Connection settings for a text-completion endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    /// Additional attempts after the first, on transport failure only.
    pub max_retries: u32,
    /// Concurrent in-flight request cap for batch fan-out.
    pub concurrency: usize,
    pub bearer_token: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080/complete".to_string(),
            temperature: 0.1,
            max_tokens: 16,
            timeout: Duration::from_secs(10),
            max_retries: 3,
            concurrency: 4,
            bearer_token: None,
        }
    }
}

/// One text completion. `Err` is a transport failure description and
/// is retryable; content problems (for example an answer that parses
/// to no option letter) must be returned as `Ok` text.
pub trait TextCompleter: Sync {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32)
        -> Result<String, String>;
}

/// Blocking HTTP implementation of [`TextCompleter`].
pub struct HttpCompleter {
    base_url: String,
    bearer_token: Option<String>,
    agent: ureq::Agent,
}

impl HttpCompleter {
    pub fn new(cfg: &EndpointConfig) -> Self {
        Self {
            base_url: cfg.base_url.clone(),
            bearer_token: cfg.bearer_token.clone(),
            agent: ureq::AgentBuilder::new().timeout(cfg.timeout).build(),
        }
    }
}

impl TextCompleter for HttpCompleter {
    fn complete(
        &self,
        prompt: &str,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<String, String> {
        let mut request = self.agent.post(&self.base_url);
        if let Some(token) = &self.bearer_token {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        let response = request
            .send_json(serde_json::json!({
                "prompt": prompt,
                "temperature": temperature,
                "max_tokens": max_tokens,
            }))
            .map_err(|e| e.to_string())?;
        let body: serde_json::Value = response.into_json().map_err(|e| e.to_string())?;
        match body.get("text").and_then(|v| v.as_str()) {
            Some(text) => Ok(text.to_string()),
            None => Err("response has no \"text\" field".to_string()),
        }
    }
}

fn backoff_delay(failed_attempts: u32) -> Duration {
    let factor = 1u32 << failed_attempts.min(16);
    BACKOFF_CAP.min(BACKOFF_BASE.saturating_mul(factor))
}

/// Run one completion with exponential backoff on transport failure.
/// Returns the text and the number of retries spent (0 when the first
/// attempt succeeded).
pub fn complete_with_retry(
    completer: &dyn TextCompleter,
    cfg: &EndpointConfig,
    prompt: &str,
) -> Result<(String, u32), JudgeError> {
    let mut failed = 0u32;
    loop {
        match completer.complete(prompt, cfg.temperature, cfg.max_tokens) {
            Ok(text) => return Ok((text, failed)),
            Err(reason) => {
                if failed >= cfg.max_retries {
                    return Err(JudgeError::EndpointUnavailable {
                        attempts: failed + 1,
                        reason,
                    });
                }
                std::thread::sleep(backoff_delay(failed));
                failed += 1;
            }
        }
    }
}

/// [`Predictor`] that asks a remote endpoint: renders the prediction
/// prompt, fetches a completion, and parses the answer letter. An
/// answer with no recognizable letter is an unparseable outcome, never
/// a retry.
pub struct RemotePredictor<C: TextCompleter> {
    completer: C,
    cfg: EndpointConfig,
    template: TemplateId,
}

impl RemotePredictor<HttpCompleter> {
    pub fn http(cfg: EndpointConfig, template: TemplateId) -> Self {
        let completer = HttpCompleter::new(&cfg);
        Self { completer, cfg, template }
    }
}

impl<C: TextCompleter> RemotePredictor<C> {
    pub fn new(completer: C, cfg: EndpointConfig, template: TemplateId) -> Self {
        Self { completer, cfg, template }
    }
}

impl<C: TextCompleter> Predictor for RemotePredictor<C> {
    fn predict(
        &self,
        summary_text: &str,
        mcq: &MultipleChoiceQuestion,
    ) -> Result<PredictionOutcome, JudgeError> {
        let prompt = super::build_prediction_prompt(summary_text, mcq, self.template);
        let (text, retries) = complete_with_retry(&self.completer, &self.cfg, &prompt)?;
        Ok(PredictionOutcome {
            chosen: super::parse_choice(&text),
            raw_response: Some(text),
            scores: None,
            retries,
        })
    }
}
