use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;

use super::{VerificationRequest, Verifier, VerifyError};
use crate::taxonomy::ErrorCode;
use crate::verdict::Verdict;

#[derive(Debug, Clone)]
pub enum ScriptEntry {
    Unsafe { code: ErrorCode, confidence: f64 },
    Fail,
}

/// Fixture backend: answers from a table keyed by (problem text, step index),
/// safe with confidence 1.0 everywhere else. Counts calls.
#[derive(Debug, Default)]
pub struct ScriptedVerifier {
    entries: HashMap<(String, usize), ScriptEntry>,
    calls: AtomicUsize,
}

impl ScriptedVerifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn flag(mut self, problem: impl Into<String>, step: usize, code: ErrorCode, confidence: f64) -> Self {
        self.entries
            .insert((problem.into(), step), ScriptEntry::Unsafe { code, confidence });
        self
    }

    pub fn fail(mut self, problem: impl Into<String>, step: usize) -> Self {
        self.entries.insert((problem.into(), step), ScriptEntry::Fail);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Verifier for ScriptedVerifier {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !request.is_valid() {
            return Err(VerifyError::InvalidRequest);
        }
        let idx = request.current_index;
        match self.entries.get(&(request.problem.clone(), idx)) {
            None => Ok(Verdict::safe(idx, 1.0)?),
            Some(ScriptEntry::Unsafe { code, confidence }) => Ok(Verdict::unsafe_step(
                idx,
                *code,
                *confidence,
                request.current_step.clone(),
                "scripted",
            )?),
            Some(ScriptEntry::Fail) => Err(VerifyError::BackendUnavailable {
                attempts: 1,
                last: "scripted failure".into(),
            }),
        }
    }
}
