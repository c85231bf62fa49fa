//! The streaming relay: upstream SSE in, the same bytes out, reasoning teed
//! into a monitor session.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use cotguard_core::{monitor_stream, CancelSignal, MonitorReport, MonitorSession, Termination, Verifier};
use futures::StreamExt;
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::extract::ReasoningExtractor;
use crate::session::{
    ms, new_session_id, unix_ms, InterruptWindow, RequestSummary, SessionLog, StreamOutcome, TimingVerifier,
};
use crate::sse::{event, parse_event, EventPayload, SseFramer};
use crate::Gateway;

/// Name of the terminal event emitted when the monitor halts a chain.
pub const INTERRUPT_EVENT: &str = "reasoning_interrupt";

fn error_response(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body = json!({"error": {"message": message.into(), "type": kind}});
    (status, Json(body)).into_response()
}

fn message_text(content: &Value) -> Option<String> {
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            (!text.is_empty()).then(|| text.join("\n"))
        }
        _ => None,
    }
}

/// The last user message is the problem; system messages are background.
fn problem_and_background(body: &Value) -> (String, Option<String>, usize) {
    let messages = body["messages"].as_array().map(Vec::as_slice).unwrap_or_default();
    let by_role = |role: &str| {
        messages
            .iter()
            .filter(|m| m["role"] == role)
            .filter_map(|m| message_text(&m["content"]))
            .collect::<Vec<_>>()
    };
    let problem = by_role("user").pop().unwrap_or_default();
    let system = by_role("system");
    let background = (!system.is_empty()).then(|| system.join("\n\n"));
    (problem, background, messages.len())
}

pub(crate) async fn chat_completions(
    State(gw): State<Gateway>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> Response {
    if body["stream"] != Value::Bool(true) {
        return error_response(
            StatusCode::BAD_REQUEST,
            "invalid_request_error",
            "only streaming requests (\"stream\": true) are supported",
        );
    }
    let (problem, background, n_messages) = problem_and_background(&body);
    let session_id = new_session_id();
    let origin = Instant::now();
    let timing = Arc::new(TimingVerifier::new(gw.verifier(), origin));
    let session = match MonitorSession::new(
        &session_id,
        &problem,
        background,
        Arc::clone(&timing) as Arc<dyn Verifier>,
        gw.config().monitor,
    ) {
        Ok(s) => s,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "invalid_request_error", e.to_string()),
    };

    let mut call = gw
        .client()
        .post(&gw.config().upstream_url)
        .header(header::ACCEPT, "text/event-stream")
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.to_string());
    if let Some(key) = gw.upstream_key() {
        call = call.bearer_auth(key);
    } else if let Some(auth) = headers.get(header::AUTHORIZATION) {
        call = call.header(header::AUTHORIZATION, auth);
    }
    let upstream = match call.send().await {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "upstream connect failed");
            return error_response(
                StatusCode::BAD_GATEWAY,
                "upstream_error",
                format!("upstream unreachable: {e}"),
            );
        }
    };
    if !upstream.status().is_success() {
        let status = StatusCode::from_u16(upstream.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
        let text = upstream.text().await.unwrap_or_default();
        return (status, text).into_response();
    }

    let summary = RequestSummary {
        model: body["model"].as_str().map(str::to_string),
        messages: n_messages,
        problem_preview: problem.chars().take(120).collect(),
    };
    let (tx, rx) = mpsc::channel::<Bytes>(64);
    let relay = Relay {
        gw: gw.clone(),
        session_id,
        summary,
        origin,
        started_at: unix_ms(),
        timing,
        tx,
    };
    tokio::spawn(relay.run(session, upstream));

    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    let mut response = Response::new(Body::from_stream(stream));
    let h = response.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/event-stream"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    response
}

enum Exit {
    UpstreamEnded,
    MonitorHalted,
    ClientGone,
    UpstreamFailed(String),
}

struct Relay {
    gw: Gateway,
    session_id: String,
    summary: RequestSummary,
    origin: Instant,
    started_at: u128,
    timing: Arc<TimingVerifier>,
    tx: mpsc::Sender<Bytes>,
}

impl Relay {
    async fn run(self, session: MonitorSession, upstream: reqwest::Response) {
        let cancel = CancelSignal::new();
        let (reason_tx, reason_rx) = mpsc::unbounded_channel::<Result<String, String>>();
        let monitor_cancel = cancel.clone();
        let monitor = tokio::spawn(async move {
            let source = futures::stream::unfold(reason_rx, |mut rx| async move { rx.recv().await.map(|x| (x, rx)) });
            monitor_stream(session, Box::pin(source), &monitor_cancel).await
        });

        let mut reason_tx = Some(reason_tx);
        let mut extractor = ReasoningExtractor::new(self.gw.config().reasoning_delimiters.clone());
        let mut framer = SseFramer::new();
        let mut upstream = upstream.bytes_stream();
        let mut held: Vec<Bytes> = Vec::new();
        let mut marks: Vec<(f64, usize)> = Vec::new();
        let mut forwarded = 0usize;
        let mut cancelled = cancel.cancelled();

        let exit = 'relay: loop {
            let chunk = tokio::select! {
                biased;
                _ = &mut cancelled => break 'relay Exit::MonitorHalted,
                _ = self.tx.closed() => break 'relay Exit::ClientGone,
                chunk = upstream.next() => chunk,
            };
            let bytes = match chunk {
                None => break Exit::UpstreamEnded,
                Some(Err(e)) => break Exit::UpstreamFailed(e.to_string()),
                Some(Ok(b)) => b,
            };
            for ev in framer.push(&bytes) {
                if cancel.is_cancelled() {
                    break 'relay Exit::MonitorHalted;
                }
                // Everything from the end marker on is held until the monitor
                // has judged the final step.
                if !held.is_empty() {
                    held.push(ev);
                    continue;
                }
                match parse_event(&ev) {
                    EventPayload::Done => {
                        held.push(ev);
                        continue;
                    }
                    EventPayload::Delta { reasoning, content } => {
                        let mut text = reasoning.unwrap_or_default();
                        if let Some(c) = content {
                            text.push_str(&extractor.push(&c));
                        }
                        if let Some(tx) = &reason_tx {
                            if !text.is_empty() {
                                let _ = tx.send(Ok(text));
                            }
                        }
                        if extractor.is_closed() {
                            reason_tx = None;
                        }
                    }
                    EventPayload::Other => {}
                }
                let len = ev.len();
                if self.tx.send(ev).await.is_err() {
                    break 'relay Exit::ClientGone;
                }
                forwarded += len;
                marks.push((ms(self.origin.elapsed()), len));
            }
        };
        drop(upstream);

        if let Some(tx) = reason_tx.take() {
            match &exit {
                Exit::UpstreamEnded => {
                    let (tail, unclosed) = extractor.finish();
                    if unclosed {
                        tracing::warn!(session = %self.session_id, "reasoning region never closed; monitored to end of stream");
                    }
                    if !tail.is_empty() {
                        let _ = tx.send(Ok(tail));
                    }
                }
                Exit::ClientGone => {
                    let _ = tx.send(Err("client disconnected".into()));
                }
                Exit::UpstreamFailed(e) => {
                    let _ = tx.send(Err(format!("upstream stream failed: {e}")));
                }
                Exit::MonitorHalted => {}
            }
        }
        let report = match monitor.await {
            Ok(r) => r,
            Err(e) => {
                tracing::error!(error = %e, "monitor task failed");
                return;
            }
        };

        let halted = matches!(
            report.termination,
            Termination::Interrupted | Termination::BudgetExceeded | Termination::VerifierFailed
        );
        let outcome = match exit {
            Exit::ClientGone => StreamOutcome::ClientDisconnected,
            Exit::UpstreamFailed(ref e) if !halted => {
                let payload = json!({"error": {"message": e, "type": "upstream_error"}, "report": report});
                let _ = self.tx.send(event("error", &payload)).await;
                StreamOutcome::UpstreamFailed
            }
            _ if halted => {
                let payload = json!({
                    "termination": report.termination,
                    "verdict": report.triggering_verdict(),
                    "report": report,
                });
                let _ = self.tx.send(event(INTERRUPT_EVENT, &payload)).await;
                StreamOutcome::Interrupted
            }
            _ => {
                held.push(framer.take_remainder());
                for ev in held.into_iter().filter(|b| !b.is_empty()) {
                    let len = ev.len();
                    if self.tx.send(ev).await.is_err() {
                        break;
                    }
                    forwarded += len;
                }
                StreamOutcome::Completed
            }
        };

        let timing = self.timing.take();
        let interrupt_window = interrupt_window(&report, &timing, &marks);
        let span = tracing::info_span!("session", id = %self.session_id);
        span.in_scope(
            || tracing::info!(outcome = ?outcome, termination = ?report.termination, forwarded, "session finished"),
        );
        self.gw.store().record(SessionLog {
            session_id: self.session_id,
            started_at_unix_ms: self.started_at,
            request_summary: self.summary,
            outcome,
            report,
            timing,
            bytes_forwarded: forwarded,
            interrupt_window,
        });
    }
}

fn interrupt_window(
    report: &MonitorReport,
    timing: &[crate::session::StepTiming],
    marks: &[(f64, usize)],
) -> Option<InterruptWindow> {
    if report.termination != Termination::Interrupted {
        return None;
    }
    let step = report.first_unsafe_position?;
    let t = timing.iter().find(|t| t.step_index == step)?;
    let end = t.started_ms + t.latency_ms;
    let bytes = marks
        .iter()
        .filter(|(at, _)| *at >= t.started_ms && *at <= end)
        .map(|(_, n)| n)
        .sum();
    Some(InterruptWindow {
        step_index: step,
        verifier_latency_ms: t.latency_ms,
        bytes_during_verification: bytes,
    })
}
