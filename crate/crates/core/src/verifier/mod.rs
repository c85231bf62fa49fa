//! Verification backends.
//!
//! A [`Verifier`] takes the rolling chain context plus the step under
//! inspection and returns exactly one [`Verdict`] or an error. Three
//! implementations ship with the crate: an LLM client speaking the
//! chat-completions protocol (feature `llm`), a deterministic marker oracle
//! for synthetic corpora, and a scripted backend for fixtures.

mod oracle;
mod prompt;
mod scripted;

#[cfg(feature = "llm")]
mod llm;

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainState;
use crate::verdict::{Verdict, VerdictError};

pub use oracle::{OracleScript, OracleVerifier, DEFAULT_MARKER_PREFIX, DEFAULT_MARKER_SUFFIX};
pub use prompt::{build_prompt, build_prompt_with, PromptOptions, CALIBRATION_RULES, ROLE_DEFINITION};
pub use scripted::{ScriptEntry, ScriptedVerifier};

#[cfg(feature = "llm")]
pub use llm::{LlmVerifier, VerifierConfig, DEFAULT_API_KEY_ENV};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRequest {
    pub problem: String,
    pub background: Option<String>,
    pub prior_steps: Vec<String>,
    pub current_step: String,
    pub current_index: usize,
}

impl VerificationRequest {
    /// Request for the step that would extend `state` by one.
    pub fn from_state(state: &ChainState, current_step: impl Into<String>) -> Self {
        let prior_steps: Vec<String> = state.steps().iter().map(|s| s.text.clone()).collect();
        Self {
            problem: state.problem().to_string(),
            background: state.background().map(str::to_string),
            current_index: prior_steps.len(),
            prior_steps,
            current_step: current_step.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.current_index == self.prior_steps.len() && !self.problem.trim().is_empty()
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("verifier backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("malformed verifier response: {0}")]
    Malformed(#[from] VerdictError),
    #[error("verifier call timed out")]
    Timeout,
    #[error("malformed oracle marker `{0}`")]
    MalformedMarker(String),
    #[error("invalid verification request: current_index must equal the number of prior steps and the problem must be non-empty")]
    InvalidRequest,
}

#[async_trait]
pub trait Verifier: Send + Sync {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError>;
}

#[async_trait]
impl<V: Verifier + ?Sized> Verifier for Arc<V> {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        (**self).verify(request).await
    }
}

#[async_trait]
impl<V: Verifier + ?Sized> Verifier for Box<V> {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        (**self).verify(request).await
    }
}
