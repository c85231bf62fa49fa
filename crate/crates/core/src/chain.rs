//! Reasoning chains, step segmentation and the annotated-chain record format.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::ErrorCode;

/// The step delimiter: exactly two newlines.
pub const STEP_DELIMITER: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub text: String,
}

impl ReasoningStep {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmenterError {
    #[error("segmenter already flushed; no further input accepted")]
    Flushed,
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n")
}

/// Split a complete chain into steps.
///
/// Fragments that are empty after trimming are dropped and indices are
/// assigned after the drop.
pub fn segment_batch(text: &str) -> Vec<ReasoningStep> {
    normalize_newlines(text)
        .split(STEP_DELIMITER)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| ReasoningStep::new(i, s))
        .collect()
}

/// Incremental segmenter for streamed text.
///
/// Produces exactly the output of [`segment_batch`] on the concatenated input,
/// regardless of how the input is chunked.
#[derive(Debug, Default)]
pub struct StreamSegmenter {
    pending: String,
    // Trailing '\r' held back in case the next chunk starts with '\n'.
    held_cr: bool,
    emitted: usize,
    flushed: bool,
}

impl StreamSegmenter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emitted_count(&self) -> usize {
        self.emitted
    }

    pub fn pending(&self) -> &str {
        &self.pending
    }

    pub fn is_flushed(&self) -> bool {
        self.flushed
    }

    pub fn feed(&mut self, chunk: &str) -> Result<Vec<ReasoningStep>, SegmenterError> {
        if self.flushed {
            return Err(SegmenterError::Flushed);
        }
        if chunk.is_empty() {
            return Ok(Vec::new());
        }
        let mut incoming = String::with_capacity(chunk.len() + 1);
        if self.held_cr {
            incoming.push('\r');
            self.held_cr = false;
        }
        incoming.push_str(chunk);
        if incoming.ends_with('\r') {
            incoming.pop();
            self.held_cr = true;
        }
        // A delimiter can straddle the old tail and the new text, so the search
        // restarts at a trailing newline left over from the previous chunk.
        let search_from = if self.pending.ends_with('\n') {
            self.pending.len() - 1
        } else {
            self.pending.len()
        };
        self.pending.push_str(&normalize_newlines(&incoming));

        let mut out = Vec::new();
        let mut start = 0;
        let mut cursor = search_from;
        while let Some(rel) = self.pending[cursor..].find(STEP_DELIMITER) {
            let at = cursor + rel;
            self.emit_into(&mut out, start, at);
            start = at + STEP_DELIMITER.len();
            cursor = start;
        }
        self.pending.drain(..start);
        Ok(out)
    }

    /// Emit the trimmed tail, if any, and make the segmenter terminal.
    pub fn flush(&mut self) -> Option<ReasoningStep> {
        if self.flushed {
            return None;
        }
        self.flushed = true;
        if self.held_cr {
            self.pending.push('\r');
            self.held_cr = false;
        }
        let tail = std::mem::take(&mut self.pending);
        let text = tail.trim();
        if text.is_empty() {
            return None;
        }
        let step = ReasoningStep::new(self.emitted, text);
        self.emitted += 1;
        Some(step)
    }

    fn emit_into(&mut self, out: &mut Vec<ReasoningStep>, from: usize, to: usize) {
        let text = self.pending[from..to].trim();
        if !text.is_empty() {
            out.push(ReasoningStep::new(self.emitted, text));
            self.emitted += 1;
        }
    }
}

/// Rolling context handed to the verifier: the query plus every step that has
/// already passed inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    problem: String,
    background: Option<String>,
    steps: Vec<ReasoningStep>,
    final_answer: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("problem statement is empty")]
    EmptyProblem,
    #[error("step index {got} does not continue the chain (expected {expected})")]
    NonContiguous { expected: usize, got: usize },
}

impl ChainState {
    pub fn new(problem: impl Into<String>, background: Option<String>) -> Result<Self, ChainError> {
        let problem = problem.into();
        if problem.trim().is_empty() {
            return Err(ChainError::EmptyProblem);
        }
        Ok(Self {
            problem,
            background: background.filter(|b| !b.trim().is_empty()),
            steps: Vec::new(),
            final_answer: None,
        })
    }

    pub fn problem(&self) -> &str {
        &self.problem
    }

    pub fn background(&self) -> Option<&str> {
        self.background.as_deref()
    }

    pub fn steps(&self) -> &[ReasoningStep] {
        &self.steps
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.final_answer.as_deref()
    }

    pub fn set_final_answer(&mut self, answer: impl Into<String>) {
        self.final_answer = Some(answer.into());
    }

    pub fn push(&mut self, step: ReasoningStep) -> Result<(), ChainError> {
        if step.index != self.steps.len() {
            return Err(ChainError::NonContiguous {
                expected: self.steps.len(),
                got: step.index,
            });
        }
        self.steps.push(step);
        Ok(())
    }
}

/// Ground-truth annotation: the 0-indexed first erroneous step and its type.
/// Both fields are null for clean chains.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLabel {
    pub position: Option<usize>,
    #[serde(rename = "type")]
    pub error_type: Option<ErrorCode>,
}

impl ChainLabel {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn error(position: usize, code: ErrorCode) -> Self {
        Self {
            position: Some(position),
            error_type: Some(code),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.position.is_none() && self.error_type.is_none()
    }
}

/// One benchmark record, serialized as a single JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedChain {
    pub id: String,
    pub source: String,
    pub problem: String,
    pub context: Option<String>,
    pub chain_text: String,
    pub label: ChainLabel,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("record `{id}`: {reason}")]
    Invalid { id: String, reason: String },
}

impl AnnotatedChain {
    /// Check the record against the dataset format. Returns the segmented
    /// steps on success so callers do not segment twice.
    pub fn validate(&self) -> Result<Vec<ReasoningStep>, RecordError> {
        let invalid = |reason: String| RecordError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.problem.trim().is_empty() {
            return Err(invalid("empty problem".into()));
        }
        let steps = segment_batch(&self.chain_text);
        match (self.label.position, self.label.error_type) {
            (None, None) => {}
            (Some(pos), Some(_)) => {
                if pos >= steps.len() {
                    return Err(invalid(format!(
                        "label.position {pos} out of range for {} steps",
                        steps.len()
                    )));
                }
            }
            _ => {
                return Err(invalid(
                    "label.position and label.type must both be set or both be null".into(),
                ))
            }
        }
        Ok(steps)
    }
}
