use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{VerificationRequest, Verifier, VerifyError};
use crate::taxonomy::ErrorCode;
use crate::verdict::{normalize_whitespace, Verdict};

pub const DEFAULT_MARKER_PREFIX: &str = "⟦ERR:";
pub const DEFAULT_MARKER_SUFFIX: &str = "⟧";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleScript {
    pub marker_prefix: String,
    pub marker_suffix: String,
    pub default_confidence: f64,
}

impl Default for OracleScript {
    fn default() -> Self {
        Self {
            marker_prefix: DEFAULT_MARKER_PREFIX.to_string(),
            marker_suffix: DEFAULT_MARKER_SUFFIX.to_string(),
            default_confidence: 1.0,
        }
    }
}

impl OracleScript {
    pub fn is_valid(&self) -> bool {
        !self.marker_prefix.is_empty()
            && !self.marker_suffix.is_empty()
            && self.marker_prefix != self.marker_suffix
            && (0.0..=1.0).contains(&self.default_confidence)
    }

    pub fn marker(&self, code: ErrorCode) -> String {
        format!("{}{}{}", self.marker_prefix, code, self.marker_suffix)
    }

    /// Find the first marker in `text`: its byte span and the embedded code.
    fn find_marker<'t>(&self, text: &'t str) -> Option<(usize, usize, &'t str)> {
        let start = text.find(&self.marker_prefix)?;
        let code_start = start + self.marker_prefix.len();
        let code_len = text[code_start..].find(&self.marker_suffix)?;
        let end = code_start + code_len + self.marker_suffix.len();
        Some((start, end, &text[code_start..code_start + code_len]))
    }

    /// Remove every marker occurrence from `text`.
    pub fn strip_markers(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some((start, end, _)) = self.find_marker(rest) {
            out.push_str(&rest[..start]);
            rest = &rest[end..];
        }
        out.push_str(rest);
        out
    }

    /// Oracle judgment for a single step text.
    pub fn judge(&self, step_index: usize, step_text: &str) -> Result<Verdict, VerifyError> {
        let Some((start, end, raw_code)) = self.find_marker(step_text) else {
            return Ok(Verdict::safe(step_index, self.default_confidence)?);
        };
        let code: ErrorCode = raw_code
            .parse()
            .map_err(|_| VerifyError::MalformedMarker(step_text[start..end].to_string()))?;
        let sentence = marked_sentence(step_text, start, end);
        let mut quote = normalize_whitespace(&self.strip_markers(sentence));
        if quote.is_empty() {
            quote = normalize_whitespace(&self.strip_markers(step_text));
        }
        if quote.is_empty() {
            // Marker-only step: the marker itself is the only locatable text.
            quote = step_text[start..end].to_string();
        }
        let name = code.descriptor().name;
        Ok(Verdict::unsafe_step(
            step_index,
            code,
            self.default_confidence,
            quote,
            format!("planted {name} marker"),
        )?)
    }
}

/// The sentence containing the marker span `[start, end)`. A marker placed
/// right after a sentence terminator belongs to that preceding sentence.
fn marked_sentence(text: &str, start: usize, end: usize) -> &str {
    let is_terminator = |c: char| matches!(c, '.' | '!' | '?' | '\n');
    let before = text[..start].trim_end();
    let before = before.strip_suffix(is_terminator).unwrap_or(before);
    let sentence_start = before.rfind(is_terminator).map_or(0, |i| i + 1);
    let sentence_end = text[end..].find(is_terminator).map_or(text.len(), |i| end + i + 1);
    &text[sentence_start..sentence_end]
}

/// Flags a step iff the current step carries a valid marker.
#[derive(Debug, Clone, Default)]
pub struct OracleVerifier {
    script: OracleScript,
}

impl OracleVerifier {
    pub fn new(script: OracleScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &OracleScript {
        &self.script
    }
}

#[async_trait]
impl Verifier for OracleVerifier {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        if !request.is_valid() {
            return Err(VerifyError::InvalidRequest);
        }
        self.script.judge(request.current_index, &request.current_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::{validate_quote, Flag};
    use futures::executor::block_on;

    fn req(prior: &[&str], current: &str) -> VerificationRequest {
        VerificationRequest {
            problem: "p".into(),
            background: None,
            prior_steps: prior.iter().map(|s| s.to_string()).collect(),
            current_step: current.into(),
            current_index: prior.len(),
        }
    }

    #[test]
    fn planted_marker_is_flagged() {
        let v = block_on(OracleVerifier::default().verify(&req(&[], "so x=4 ⟦ERR:2b⟧"))).unwrap();
        assert_eq!(v.flag(), Flag::Unsafe);
        assert_eq!(v.error_type(), Some(ErrorCode::Calculation));
        assert_eq!(v.confidence(), 1.0);
        assert_eq!(v.quote(), "so x=4");
    }

    #[test]
    fn loop_marker() {
        let v = block_on(OracleVerifier::default().verify(&req(&["a"], "Let me check again. ⟦ERR:3a⟧"))).unwrap();
        assert_eq!(v.error_type(), Some(ErrorCode::ReasoningLoop));
        assert_eq!(v.step_index(), 1);
        assert_eq!(v.quote(), "Let me check again.");
    }

    #[test]
    fn clean_step_is_safe() {
        let v = block_on(OracleVerifier::default().verify(&req(&[], "2 + 2 = 4."))).unwrap();
        assert_eq!(v.flag(), Flag::Safe);
        assert_eq!(v.error_type(), None);
    }

    #[test]
    fn only_current_step_inspected() {
        let v = block_on(OracleVerifier::default().verify(&req(&["x ⟦ERR:2a⟧"], "clean"))).unwrap();
        assert_eq!(v.flag(), Flag::Safe);
    }

    #[test]
    fn invalid_code_is_error() {
        let err = block_on(OracleVerifier::default().verify(&req(&[], "⟦ERR:7q⟧"))).unwrap_err();
        assert!(matches!(err, VerifyError::MalformedMarker(m) if m == "⟦ERR:7q⟧"));
    }

    #[test]
    fn quote_picks_marked_sentence() {
        let script = OracleScript::default();
        let step = "First we read the question. Then 3 * 4 = 13 ⟦ERR:2b⟧ which we carry. Next line.";
        let v = script.judge(0, step).unwrap();
        assert_eq!(v.quote(), "Then 3 * 4 = 13 which we carry.");
        let stripped = script.strip_markers(step);
        assert!(validate_quote(&v, &stripped));

        let v = script.judge(0, "A fine start. Adding gives 23. ⟦ERR:2b⟧").unwrap();
        assert_eq!(v.quote(), "Adding gives 23.");
        assert!(validate_quote(&v, "A fine start. Adding gives 23. ⟦ERR:2b⟧"));
    }

    #[test]
    fn marker_only_step_still_has_quote() {
        let v = OracleScript::default().judge(0, "⟦ERR:3c⟧").unwrap();
        assert_eq!(v.quote(), "⟦ERR:3c⟧");
    }

    #[test]
    fn custom_markers_and_confidence() {
        let script = OracleScript {
            marker_prefix: "<<".into(),
            marker_suffix: ">>".into(),
            default_confidence: 0.6,
        };
        assert!(script.is_valid());
        let v = script.judge(2, "bad <<1B>>").unwrap();
        assert_eq!(v.error_type(), Some(ErrorCode::MissingConstraints));
        assert_eq!(v.confidence(), 0.6);
        assert!(!OracleScript {
            marker_suffix: "<<".into(),
            ..script
        }
        .is_valid());
    }

    #[test]
    fn invalid_request_rejected() {
        let mut r = req(&["a"], "b");
        r.current_index = 0;
        assert!(matches!(
            block_on(OracleVerifier::default().verify(&r)),
            Err(VerifyError::InvalidRequest)
        ));
    }
}
