//! Browser bindings. Every entry point takes plain values and returns a JSON
//! string; `www/main.js` renders it.

use std::collections::BTreeMap;
use std::sync::Arc;

use cotguard_core::bench::{generate_synthetic, Presets};
use cotguard_core::monitor::StepStart;
use cotguard_core::verdict::DEFAULT_MAX_STEPS;
use cotguard_core::{
    segment_batch, ErrorCode, InterventionPolicy, MonitorConfig, MonitorSession, OracleScript, OracleVerifier, Verifier,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub fn segment_json(text: &str) -> String {
    serde_json::to_string(&segment_batch(text)).expect("steps serialize")
}

/// Drive a session step by step with the oracle judged inline, so no async
/// executor is needed in the browser.
pub fn replay_json(problem: &str, chain_text: &str, tau: f64) -> Result<String, String> {
    let policy = InterventionPolicy::new(tau, DEFAULT_MAX_STEPS).map_err(|e| e.to_string())?;
    let script = OracleScript::default();
    let verifier: Arc<dyn Verifier> = Arc::new(OracleVerifier::new(script.clone()));
    let mut session =
        MonitorSession::new("demo", problem, None, verifier, MonitorConfig::new(policy)).map_err(|e| e.to_string())?;
    for step in segment_batch(chain_text) {
        match session.begin_step(&step).map_err(|e| e.to_string())? {
            StepStart::Verify(_) => {
                let result = script.judge(step.index, &step.text);
                session.finish_step(step, result);
            }
            StepStart::Stopped => break,
        }
        if session.is_terminated() {
            break;
        }
    }
    Ok(serde_json::to_string(&session.finish()).expect("report serializes"))
}

pub fn generate_json(preset: &str, seed: u64, n: usize) -> Result<String, String> {
    let presets = Presets::builtin();
    let spec = presets.get(preset).map_err(|e| e.to_string())?;
    let chains = generate_synthetic(spec, seed, n);
    let mut histogram: BTreeMap<&str, usize> = ErrorCode::ALL.iter().map(|c| (c.as_str(), 0)).collect();
    for c in &chains {
        if let Some(t) = c.label.error_type {
            *histogram.entry(t.as_str()).or_default() += 1;
        }
    }
    let target: BTreeMap<&str, f64> = ErrorCode::ALL
        .iter()
        .map(|&c| (c.as_str(), spec.probability(c)))
        .collect();
    Ok(json!({
        "preset": preset,
        "n": n,
        "histogram": histogram,
        "target": target,
        "approximate": spec.approximate,
        "sample": chains.first(),
    })
    .to_string())
}

pub fn preset_names() -> Vec<String> {
    Presets::builtin().names().map(str::to_string).collect()
}

#[wasm_bindgen]
pub fn segment(text: &str) -> String {
    segment_json(text)
}

#[wasm_bindgen]
pub fn replay(problem: &str, chain_text: &str, tau: f64) -> Result<String, JsError> {
    replay_json(problem, chain_text, tau).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate(preset: &str, seed: u32, n: u32) -> Result<String, JsError> {
    generate_json(preset, u64::from(seed), n as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn presets() -> String {
    serde_json::to_string(&preset_names()).expect("names serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn replay_interrupts_at_marker() {
        let text = "One.\n\nTwo ⟦ERR:3b⟧\n\nThree.";
        let report: Value = serde_json::from_str(&replay_json("p", text, 0.7).unwrap()).unwrap();
        assert_eq!(report["termination"], "Interrupted");
        assert_eq!(report["first_unsafe_position"], 1);
        assert_eq!(report["verdicts"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn inclusive_tau_and_invalid_input() {
        let text = "One.\n\nTwo ⟦ERR:3b⟧";
        let report: Value = serde_json::from_str(&replay_json("p", text, 1.0).unwrap()).unwrap();
        // Oracle confidence is 1.0, so tau = 1.0 still interrupts (inclusive).
        assert_eq!(report["termination"], "Interrupted");
        assert!(replay_json("p", text, 1.5).is_err());
        assert!(replay_json("", text, 0.5).is_err());
    }

    #[test]
    fn generate_histogram_sums_to_n() {
        let out: Value = serde_json::from_str(&generate_json("overthink", 1, 500).unwrap()).unwrap();
        let total: u64 = out["histogram"]
            .as_object()
            .unwrap()
            .values()
            .map(|v| v.as_u64().unwrap())
            .sum();
        assert_eq!(total, 500);
        assert!(generate_json("nope", 1, 5).is_err());
        assert_eq!(preset_names().len(), 5);
    }

    #[test]
    fn segment_matches_core() {
        let v: Value = serde_json::from_str(&segment_json("A\n\nB")).unwrap();
        assert_eq!(v[1]["text"], "B");
    }
}
