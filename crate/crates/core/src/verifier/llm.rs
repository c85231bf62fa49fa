use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::{build_prompt_with, PromptOptions};
use super::{VerificationRequest, Verifier, VerifyError};
use crate::taxonomy::all_types;
use crate::verdict::{parse_verdict, Verdict};

pub const DEFAULT_API_KEY_ENV: &str = "COTGUARD_VERIFIER_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub retry_backoff_ms: u64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_context_steps: Option<usize>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_name: "gpt-oss-20b".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            temperature: 0.0,
            retry_backoff_ms: 250,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_context_steps: None,
        }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_ms == 0 {
            return Err("verifier.timeout_ms must be positive".into());
        }
        if self.endpoint.trim().is_empty() {
            return Err("verifier.endpoint must be set".into());
        }
        if self.model_name.trim().is_empty() {
            return Err("verifier.model_name must be set".into());
        }
        Ok(())
    }
}

/// Verifier backed by an off-the-shelf chat model.
#[derive(Debug, Clone)]
pub struct LlmVerifier {
    config: VerifierConfig,
    api_key: Option<String>,
    client: reqwest::Client,
}

enum Attempt {
    Retry(VerifyError),
    Done(Verdict),
}

impl LlmVerifier {
    pub fn new(config: VerifierConfig) -> Result<Self, VerifyError> {
        config
            .validate()
            .map_err(|last| VerifyError::BackendUnavailable { attempts: 0, last })?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| VerifyError::BackendUnavailable {
                attempts: 0,
                last: e.to_string(),
            })?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    pub fn prompt_for(&self, request: &VerificationRequest) -> String {
        build_prompt_with(
            request,
            all_types(),
            PromptOptions {
                max_prior_steps: self.config.max_context_steps,
            },
        )
    }

    async fn attempt(&self, body: &serde_json::Value, step_index: usize) -> Attempt {
        let mut call = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = match call.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(VerifyError::Timeout),
            Err(e) => return Attempt::Retry(unavailable(e)),
        };
        let response = match response.error_for_status() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(unavailable(e)),
        };
        let payload: serde_json::Value = match response.json().await {
            Ok(v) => v,
            Err(e) if e.is_timeout() => return Attempt::Retry(VerifyError::Timeout),
            Err(e) => return Attempt::Retry(unavailable(e)),
        };
        let Some(content) = payload["choices"][0]["message"]["content"].as_str() else {
            return Attempt::Retry(VerifyError::BackendUnavailable {
                attempts: 1,
                last: "response has no choices[0].message.content".into(),
            });
        };
        match parse_verdict(content, step_index) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Retry(VerifyError::Malformed(e)),
        }
    }
}

fn unavailable(e: reqwest::Error) -> VerifyError {
    VerifyError::BackendUnavailable {
        attempts: 1,
        last: e.to_string(),
    }
}

#[async_trait]
impl Verifier for LlmVerifier {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        if !request.is_valid() {
            return Err(VerifyError::InvalidRequest);
        }
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": self.prompt_for(request)}],
            "temperature": self.config.temperature,
            "stream": false,
        });
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for n in 0..attempts {
            if n > 0 && self.config.retry_backoff_ms > 0 {
                tokio::time::sleep(Duration::from_millis(self.config.retry_backoff_ms * u64::from(n))).await;
            }
            match self.attempt(&body, request.current_index).await {
                Attempt::Done(v) => return Ok(v),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt = n + 1, error = %e, "verifier call failed");
                    last = Some(e);
                }
            }
        }
        Err(VerifyError::BackendUnavailable {
            attempts,
            last: last.map_or_else(String::new, |e| e.to_string()),
        })
    }
}
