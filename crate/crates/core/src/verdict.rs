//! Structured per-step verdicts, their wire schema, and the threshold-gated
//! intervention decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{ErrorCode, NO_ERROR};

pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_MAX_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerdictError {
    #[error("no JSON object found in verifier response")]
    NoJsonObject,
    #[error("verifier response does not match the verdict schema: {0}")]
    Schema(String),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("unknown error type code `{0}`")]
    UnknownType(String),
    #[error("flag `{flag}` inconsistent with error_type `{error_type}`")]
    FlagMismatch { flag: String, error_type: String },
    #[error("unsafe verdict without a locating quote")]
    MissingQuote,
}

/// One step's judgment. Construct through [`Verdict::safe`],
/// [`Verdict::unsafe_step`] or [`parse_verdict`]; the invariants
/// `Safe <=> NO_ERROR`, `confidence in [0,1]` and "unsafe has a quote" hold
/// for every value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VerdictRecord", into = "VerdictRecord")]
pub struct Verdict {
    step_index: usize,
    error_type: Option<ErrorCode>,
    confidence: f64,
    quote: String,
    explanation: String,
}

impl Verdict {
    pub fn safe(step_index: usize, confidence: f64) -> Result<Self, VerdictError> {
        check_confidence(confidence)?;
        Ok(Self {
            step_index,
            error_type: None,
            confidence,
            quote: String::new(),
            explanation: String::new(),
        })
    }

    pub fn unsafe_step(
        step_index: usize,
        code: ErrorCode,
        confidence: f64,
        quote: impl Into<String>,
        explanation: impl Into<String>,
    ) -> Result<Self, VerdictError> {
        check_confidence(confidence)?;
        let quote = quote.into();
        if quote.trim().is_empty() {
            return Err(VerdictError::MissingQuote);
        }
        Ok(Self {
            step_index,
            error_type: Some(code),
            confidence,
            quote,
            explanation: explanation.into(),
        })
    }

    pub fn flag(&self) -> Flag {
        if self.error_type.is_some() {
            Flag::Unsafe
        } else {
            Flag::Safe
        }
    }

    pub fn is_unsafe(&self) -> bool {
        self.error_type.is_some()
    }

    pub fn error_type(&self) -> Option<ErrorCode> {
        self.error_type
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn quote(&self) -> &str {
        &self.quote
    }

    pub fn explanation(&self) -> &str {
        &self.explanation
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// The five-field object a verifier is asked to produce.
    pub fn to_wire(&self) -> WireVerdict {
        WireVerdict {
            flag: self.flag(),
            error_type: self
                .error_type
                .map_or_else(|| NO_ERROR.to_string(), |c| c.as_str().to_string()),
            confidence: self.confidence,
            quote: self.quote.clone(),
            explanation: self.explanation.clone(),
        }
    }

    pub fn to_wire_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("wire verdict serializes")
    }

    fn from_wire(wire: WireVerdict, step_index: usize) -> Result<Self, VerdictError> {
        let code = parse_type_field(&wire.error_type)?;
        match (wire.flag, code) {
            (Flag::Safe, None) => Verdict::safe(step_index, wire.confidence),
            (Flag::Unsafe, Some(code)) => {
                Verdict::unsafe_step(step_index, code, wire.confidence, wire.quote, wire.explanation)
            }
            (flag, _) => Err(VerdictError::FlagMismatch {
                flag: format!("{flag:?}").to_lowercase(),
                error_type: wire.error_type,
            }),
        }
    }
}

fn check_confidence(c: f64) -> Result<(), VerdictError> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(VerdictError::ConfidenceOutOfRange(c))
    }
}

fn parse_type_field(raw: &str) -> Result<Option<ErrorCode>, VerdictError> {
    let trimmed = raw.trim();
    if trimmed.eq_ignore_ascii_case(NO_ERROR) {
        return Ok(None);
    }
    trimmed
        .parse::<ErrorCode>()
        .map(Some)
        .map_err(|_| VerdictError::UnknownType(raw.to_string()))
}

/// Verifier wire schema. Field names are the contract the prompt demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireVerdict {
    #[serde(deserialize_with = "de_flag")]
    pub flag: Flag,
    pub error_type: String,
    pub confidence: f64,
    pub quote: String,
    pub explanation: String,
}

fn de_flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Flag, D::Error> {
    let raw = String::deserialize(d)?;
    match raw.trim().to_ascii_lowercase().as_str() {
        "safe" => Ok(Flag::Safe),
        "unsafe" => Ok(Flag::Unsafe),
        other => Err(serde::de::Error::custom(format!("unknown flag `{other}`"))),
    }
}

/// Serialized form used inside reports: the wire fields plus the step index.
#[derive(Serialize, Deserialize)]
struct VerdictRecord {
    step_index: usize,
    #[serde(flatten)]
    wire: WireVerdict,
}

impl TryFrom<VerdictRecord> for Verdict {
    type Error = VerdictError;

    fn try_from(r: VerdictRecord) -> Result<Self, Self::Error> {
        Verdict::from_wire(r.wire, r.step_index)
    }
}

impl From<Verdict> for VerdictRecord {
    fn from(v: Verdict) -> Self {
        VerdictRecord {
            step_index: v.step_index,
            wire: v.to_wire(),
        }
    }
}

/// Candidate JSON object slices in `raw`, in order of their opening brace.
/// Braces inside string literals are ignored when balancing.
fn balanced_objects(raw: &str) -> impl Iterator<Item = &str> {
    let bytes = raw.as_bytes();
    (0..bytes.len())
        .filter(move |&i| bytes[i] == b'{')
        .filter_map(move |start| {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (off, &b) in bytes[start..].iter().enumerate() {
                if in_string {
                    match (escaped, b) {
                        (true, _) => escaped = false,
                        (false, b'\\') => escaped = true,
                        (false, b'"') => in_string = false,
                        _ => {}
                    }
                    continue;
                }
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&raw[start..start + off + 1]);
                        }
                    }
                    _ => {}
                }
            }
            None
        })
}

/// Extract and validate the first well-formed JSON object in a verifier
/// response. Surrounding prose and code fences are tolerated.
pub fn parse_verdict(raw: &str, step_index: usize) -> Result<Verdict, VerdictError> {
    let mut schema_error = None;
    for candidate in balanced_objects(raw) {
        let Ok(value) = serde_json::from_str::<serde_json::Value>(candidate) else {
            continue;
        };
        match serde_json::from_value::<WireVerdict>(value) {
            Ok(wire) => return Verdict::from_wire(wire, step_index),
            Err(e) => {
                schema_error.get_or_insert(e.to_string());
            }
        }
    }
    Err(schema_error.map_or(VerdictError::NoJsonObject, VerdictError::Schema))
}

/// Collapse every whitespace run to one space and trim.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whether the verdict's quote occurs in the step text, modulo whitespace.
pub fn validate_quote(verdict: &Verdict, step_text: &str) -> bool {
    let quote = normalize_whitespace(verdict.quote());
    !quote.is_empty() && normalize_whitespace(step_text).contains(&quote)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Interrupt,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("tau {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("max_steps must be at least 1")]
    ZeroMaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct InterventionPolicy {
    tau: f64,
    max_steps: usize,
}

#[derive(Deserialize)]
struct RawPolicy {
    #[serde(default = "default_tau")]
    tau: f64,
    #[serde(default = "default_max_steps")]
    max_steps: usize,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

impl TryFrom<RawPolicy> for InterventionPolicy {
    type Error = PolicyError;

    fn try_from(r: RawPolicy) -> Result<Self, Self::Error> {
        InterventionPolicy::new(r.tau, r.max_steps)
    }
}

impl Default for InterventionPolicy {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl InterventionPolicy {
    pub fn new(tau: f64, max_steps: usize) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(PolicyError::TauOutOfRange(tau));
        }
        if max_steps == 0 {
            return Err(PolicyError::ZeroMaxSteps);
        }
        Ok(Self { tau, max_steps })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn with_tau(self, tau: f64) -> Result<Self, PolicyError> {
        Self::new(tau, self.max_steps)
    }
}

/// Interrupt iff the step is unsafe with confidence at or above tau.
pub fn decide(verdict: &Verdict, policy: &InterventionPolicy) -> Decision {
    if verdict.is_unsafe() && verdict.confidence() >= policy.tau() {
        Decision::Interrupt
    } else {
        Decision::Continue
    }
}
