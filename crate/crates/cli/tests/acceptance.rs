//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Tolerances are fixed here, not configurable.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use axum::routing::post;
use axum::{Json, Router};
use cotguard_core::bench::{self, generate_loop_chain, generate_synthetic, Presets};
use cotguard_core::taxonomy::{Category, SafetyProperty};
use cotguard_core::verifier::{LlmVerifier, ScriptedVerifier, VerifierConfig};
use cotguard_core::{
    all_types, decide, monitor_replay, segment_batch, AnnotatedChain, Decision, ErrorCode, InterventionPolicy,
    MonitorConfig, OracleVerifier, StreamSegmenter, Termination, Verdict, VerificationRequest, Verifier, VerifyError,
};
use cotguard_gateway::mock::{sse_events, MockUpstream};
use cotguard_gateway::{serve_on, Gateway, GatewayConfig, INTERRUPT_EVENT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const SEGMENTER_CASES: usize = 2_000;
const GENERATOR_N: usize = 10_000;
const GENERATOR_TOLERANCE_POINTS: f64 = 2.0;
const CORPUS_PER_PRESET: usize = 50;
const BUDGET_CHAIN_STEPS: usize = 300;
const BUDGET_MAX_STEPS: usize = 256;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1 ---------------------------------------------------------------------------

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "a",
        "step",
        " ",
        "  ",
        "\n",
        "\n\n",
        "\r\n",
        "\r\n\r\n",
        "\r",
        "\t",
        "⟦ERR:2b⟧",
        "é",
        "x = 3.",
    ];
    let n = rng.gen_range(0..40);
    (0..n).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect()
}

fn random_partition<'a>(rng: &mut ChaCha8Rng, text: &'a str) -> Vec<&'a str> {
    let mut bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .filter(|_| rng.gen_bool(0.3))
        .collect();
    bounds.push(text.len());
    let mut out = Vec::new();
    let mut last = 0;
    for b in bounds {
        if b > last {
            out.push(&text[last..b]);
            last = b;
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e9);
    let mut mismatches = 0;
    for _ in 0..SEGMENTER_CASES {
        let text = random_text(&mut rng);
        let parts = random_partition(&mut rng, &text);
        let mut seg = StreamSegmenter::new();
        let mut streamed = Vec::new();
        for p in parts {
            streamed.extend(seg.feed(p).expect("not flushed"));
        }
        streamed.extend(seg.flush());
        if streamed != segment_batch(&text) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{SEGMENTER_CASES} random (text, partition) pairs, {mismatches} mismatches"),
    )
}

// 2 ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    use SafetyProperty::{P1, P2, P3};
    let expected: [(&str, &str, Category, &[SafetyProperty], &str); 9] = [
        ("1a", "Misinterpretation", Category::InputParsing, &[P1], "wrong answer"),
        (
            "1b",
            "Missing Constraints",
            Category::InputParsing,
            &[P1],
            "wrong answer",
        ),
        (
            "1c",
            "Symbol Mapping Error",
            Category::InputParsing,
            &[P1],
            "wrong answer",
        ),
        ("2a", "Logical Fallacy", Category::Execution, &[P1], "wrong answer"),
        ("2b", "Calculation Error", Category::Execution, &[P1], "wrong answer"),
        ("2c", "Inconsistency", Category::Execution, &[P1], "wrong answer"),
        (
            "3a",
            "Reasoning Loop",
            Category::ProcessManagement,
            &[P2, P3],
            "resource waste",
        ),
        (
            "3b",
            "Goal Deviation",
            Category::ProcessManagement,
            &[P2, P3],
            "resource waste / wrong answer",
        ),
        (
            "3c",
            "Premature Conclusion",
            Category::ProcessManagement,
            &[P1, P3],
            "wrong answer",
        ),
    ];
    let table = all_types();
    let mut bad = Vec::new();
    if table.len() != expected.len() {
        bad.push(format!("{} rows", table.len()));
    }
    for (row, (code, name, cat, props, effect)) in table.iter().zip(expected) {
        let ok = row.code.as_str() == code
            && row.name == name
            && row.category == cat
            && row.violated_properties == props
            && row.primary_effect.label().eq_ignore_ascii_case(effect);
        if !ok {
            bad.push(code.to_string());
        }
    }
    outcome(bad.is_empty(), format!("9 rows checked, mismatched: {bad:?}"))
}

// 3 ---------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    for tau in [0.0, 0.25, 0.5, 0.7, 0.9, 1.0] {
        let policy = InterventionPolicy::new(tau, 256).unwrap();
        let v = Verdict::unsafe_step(0, ErrorCode::Calculation, tau, "q", "e").unwrap();
        if decide(&v, &policy) != Decision::Interrupt {
            failures.push(format!("conf = tau = {tau} did not interrupt"));
        }
    }
    // 10 x 10 grid: interrupting at tau implies interrupting at every lower tau.
    let grid: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let mut pairs = 0;
    for &conf in &grid {
        let v = Verdict::unsafe_step(0, ErrorCode::LogicalFallacy, conf, "q", "e").unwrap();
        let mut prev_interrupt = true;
        for &tau in &grid {
            pairs += 1;
            let interrupt = decide(&v, &InterventionPolicy::new(tau, 256).unwrap()) == Decision::Interrupt;
            if interrupt && !prev_interrupt {
                failures.push(format!("non-monotone at conf {conf:.3}, tau {tau:.3}"));
            }
            if interrupt != (conf >= tau) {
                failures.push(format!("wrong decision at conf {conf:.3}, tau {tau:.3}"));
            }
            prev_interrupt = interrupt;
        }
        if decide(&Verdict::safe(0, conf).unwrap(), &InterventionPolicy::default()) != Decision::Continue {
            failures.push("safe verdict interrupted".into());
        }
    }
    outcome(
        failures.is_empty(),
        format!("inclusive threshold at 6 tau values, {pairs}-pair grid; {failures:?}"),
    )
}

// 4 ---------------------------------------------------------------------------

async fn criterion_4() -> Outcome {
    let fixture: Value = serde_json::from_str(include_str!("fixtures/metric_oracle.json")).unwrap();
    let chains: Vec<AnnotatedChain> = serde_json::from_value(fixture["chains"].clone()).unwrap();
    let mut scripted = ScriptedVerifier::new();
    for e in fixture["script"].as_array().unwrap() {
        scripted = scripted.flag(
            e["problem"].as_str().unwrap(),
            e["step"].as_u64().unwrap() as usize,
            e["type"].as_str().unwrap().parse().unwrap(),
            e["confidence"].as_f64().unwrap(),
        );
    }
    let m = bench::evaluate(&chains, Arc::new(scripted), MonitorConfig::default()).await;
    let pos = format!("{:.2}", m.overall.position_accuracy.unwrap_or(f64::NAN) * 100.0);
    let typ = format!("{:.2}", m.overall.type_accuracy.unwrap_or(f64::NAN) * 100.0);
    let exact = m.overall.n_chains == 10 && m.overall.n_position_correct == 7 && m.overall.n_type_correct == 5;
    let pass = exact
        && pos == fixture["expected"]["position_accuracy_pct"]
        && typ == fixture["expected"]["type_accuracy_pct"]
        && m.overall.position_accuracy == Some(7.0 / 10.0)
        && m.overall.type_accuracy == Some(5.0 / 7.0);
    outcome(pass, format!("position {pos}% (want 70.00), type {typ}% (want 71.43)"))
}

// 5 ---------------------------------------------------------------------------

async fn criterion_5() -> Outcome {
    let presets = Presets::builtin();
    let mut data = Vec::new();
    for (i, spec) in presets.iter().enumerate() {
        data.extend(generate_synthetic(spec, 1000 + i as u64, CORPUS_PER_PRESET));
    }
    let started = Instant::now();
    let eval = bench::evaluate_detailed(
        &data,
        Arc::new(OracleVerifier::default()),
        MonitorConfig::default(),
        bench::EvalOptions::default(),
    )
    .await;
    let m = &eval.metrics;
    let late_verdicts = eval
        .reports
        .iter()
        .filter(|r| match r.first_unsafe_position {
            Some(pos) => r.verdicts.iter().any(|v| v.step_index() > pos),
            None => true,
        })
        .count();
    let pass = data.len() == 5 * CORPUS_PER_PRESET
        && eval.reports.len() == data.len()
        && m.overall.position_accuracy == Some(1.0)
        && m.overall.type_accuracy == Some(1.0)
        && late_verdicts == 0
        && started.elapsed() < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{} chains: position {:.2}%, type {:.2}%, reports with post-interrupt verdicts: {late_verdicts}, {:.2?}",
            data.len(),
            m.overall.position_accuracy.unwrap_or(0.0) * 100.0,
            m.overall.type_accuracy.unwrap_or(0.0) * 100.0,
            started.elapsed()
        ),
    )
}

// 6 ---------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let presets = Presets::builtin();
    let checks = [
        ("badchain", "3b", 60.8),
        ("overthink", "1a", 74.5),
        ("deadlock", "3a", 69.6),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, code, target) in checks {
        let code: ErrorCode = code.parse().unwrap();
        let chains = generate_synthetic(presets.get(name).unwrap(), 42, GENERATOR_N);
        let mut counts: BTreeMap<ErrorCode, usize> = BTreeMap::new();
        for c in &chains {
            *counts.entry(c.label.error_type.unwrap()).or_default() += 1;
        }
        let pct = counts.get(&code).copied().unwrap_or(0) as f64 * 100.0 / GENERATOR_N as f64;
        let ok = (pct - target).abs() <= GENERATOR_TOLERANCE_POINTS;
        pass &= ok;
        parts.push(format!("{name} {code} {pct:.2}% vs {target}"));
    }
    outcome(
        pass,
        format!(
            "n = {GENERATOR_N}, ±{GENERATOR_TOLERANCE_POINTS} points: {}",
            parts.join("; ")
        ),
    )
}

// 7 ---------------------------------------------------------------------------

async fn start_gateway(upstream: &str) -> (String, Gateway) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let gw = Gateway::new(
        GatewayConfig {
            listen_address: addr,
            upstream_url: upstream.to_string(),
            upstream_api_key_env: "COTGUARD_ACCEPTANCE_NO_KEY".into(),
            ..GatewayConfig::default()
        },
        Arc::new(OracleVerifier::default()),
    )
    .unwrap();
    tokio::spawn(serve_on(listener, gw.clone(), std::future::pending()));
    (format!("http://{addr}/v1/chat/completions"), gw)
}

async fn fetch(url: &str) -> Vec<u8> {
    let body = json!({"model": "mock", "stream": true, "messages": [{"role": "user", "content": "What is 2 + 3?"}]});
    let resp = reqwest::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap();
    resp.bytes().await.unwrap().to_vec()
}

async fn criterion_7() -> Outcome {
    let presets = Presets::builtin();
    let mut clean = generate_loop_chain(5, 12);
    clean.id = "clean".into();
    let clean_events = sse_events(&clean.chain_text, 6);
    let up = MockUpstream::spawn(clean_events.clone(), Duration::ZERO).await.unwrap();
    let (url, _gw) = start_gateway(&up.url).await;
    let clean_upstream: Vec<u8> = clean_events.iter().flat_map(|b| b.to_vec()).collect();
    let clean_ok = fetch(&url).await == clean_upstream;

    let marked = generate_synthetic(presets.get("badchain").unwrap(), 7, 200)
        .into_iter()
        .find(|c| c.label.error_type == Some(ErrorCode::GoalDeviation))
        .unwrap();
    let tail: String = (0..100).map(|i| format!("\n\nFurther step {i}.")).collect();
    let events = sse_events(&format!("{}{tail}", marked.chain_text), 5);
    let up = MockUpstream::spawn(events.clone(), Duration::from_millis(1))
        .await
        .unwrap();
    let (url, _gw) = start_gateway(&up.url).await;
    let full: Vec<u8> = events.iter().flat_map(|b| b.to_vec()).collect();
    let body = fetch(&url).await;
    let text = String::from_utf8_lossy(&body).into_owned();
    let (marked_ok, detail) = match text.find(&format!("event: {INTERRUPT_EVENT}")) {
        Some(at) => {
            let prefix = &body[..at];
            let terminal = &text[at..];
            let data: Option<Value> = terminal
                .lines()
                .find_map(|l| l.strip_prefix("data: "))
                .and_then(|d| serde_json::from_str(d).ok());
            let names_type = data.as_ref().is_some_and(|d| d["verdict"]["error_type"] == "3b");
            let ok = prefix.len() < full.len()
                && prefix == &full[..prefix.len()]
                && text.matches("event: ").count() == 1
                && terminal.ends_with("\n\n")
                && terminal.matches("\n\n").count() == 1
                && names_type;
            (
                ok,
                format!(
                    "prefix {} of {} bytes, names 3b: {names_type}",
                    prefix.len(),
                    full.len()
                ),
            )
        }
        None => (false, "no interrupt event".to_string()),
    };
    outcome(
        clean_ok && marked_ok,
        format!("clean byte-identical: {clean_ok}; marked: {detail}"),
    )
}

// 8 ---------------------------------------------------------------------------

struct Counting {
    inner: OracleVerifier,
    calls: AtomicUsize,
}

#[async_trait]
impl Verifier for Counting {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.verify(request).await
    }
}

async fn criterion_8() -> Outcome {
    let chain = generate_loop_chain(8, BUDGET_CHAIN_STEPS);
    let counting = Arc::new(Counting {
        inner: OracleVerifier::default(),
        calls: AtomicUsize::new(0),
    });
    let policy = InterventionPolicy::new(cotguard_core::verdict::DEFAULT_TAU, BUDGET_MAX_STEPS).unwrap();
    let steps = segment_batch(&chain.chain_text).len();
    let report = monitor_replay(
        &chain,
        Arc::clone(&counting) as Arc<dyn Verifier>,
        MonitorConfig::new(policy),
    )
    .await
    .unwrap();
    let calls = counting.calls.load(Ordering::SeqCst);
    outcome(
        steps == BUDGET_CHAIN_STEPS && report.termination == Termination::BudgetExceeded && calls <= BUDGET_MAX_STEPS,
        format!(
            "{steps}-step chain, max_steps {BUDGET_MAX_STEPS}: {:?} after {calls} verifier calls",
            report.termination
        ),
    )
}

// 9 ---------------------------------------------------------------------------

async fn criterion_9() -> Outcome {
    let fixture: Value = serde_json::from_str(include_str!("../../core/tests/fixtures/golden_verdict.json")).unwrap();
    let content = fixture["response_content"].as_str().unwrap().to_string();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move || {
            let content = content.clone();
            async move { Json(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})) }
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await });
    let verifier = LlmVerifier::new(VerifierConfig {
        endpoint: format!("http://{addr}/v1/chat/completions"),
        api_key_env: "COTGUARD_ACCEPTANCE_NO_KEY".into(),
        ..VerifierConfig::default()
    })
    .unwrap();
    let request: VerificationRequest = serde_json::from_value(fixture["request"].clone()).unwrap();
    match verifier.verify(&request).await {
        Ok(v) => {
            let got = serde_json::to_value(&v).unwrap();
            outcome(got == fixture["expected"], format!("golden verdict round trip: {got}"))
        }
        Err(e) => outcome(false, format!("verifier error: {e}")),
    }
}

fn main() {
    // Ignore libtest flags such as --nocapture passed through by cargo.
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let results = [
        ("1", "segmenter equivalence", criterion_1()),
        ("2", "taxonomy fidelity", criterion_2()),
        ("3", "intervention semantics", criterion_3()),
        ("4", "metric oracle", rt.block_on(criterion_4())),
        ("5", "end-to-end oracle soundness", rt.block_on(criterion_5())),
        ("6", "generator distribution", criterion_6()),
        ("7", "gateway prefix property", rt.block_on(criterion_7())),
        ("8", "budget guard", rt.block_on(criterion_8())),
        ("9", "llm verifier golden fixture", rt.block_on(criterion_9())),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
