//! A scripted upstream that streams a fixed chat-completions response.
//! Used by the integration tests and handy for local demos.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::header;
use axum::response::Response;
use axum::routing::post;
use axum::Router;
use serde_json::json;

/// Encode `content` as chat-completion delta events of `piece` chars each,
/// followed by `data: [DONE]`.
pub fn sse_events(content: &str, piece: usize) -> Vec<Bytes> {
    let chars: Vec<char> = content.chars().collect();
    let mut events: Vec<Bytes> = chars
        .chunks(piece.max(1))
        .enumerate()
        .map(|(i, c)| {
            let text: String = c.iter().collect();
            let data = json!({
                "id": "chatcmpl-mock",
                "object": "chat.completion.chunk",
                "choices": [{"index": 0, "delta": {"content": text}, "finish_reason": null}],
                "seq": i,
            });
            Bytes::from(format!("data: {data}\n\n"))
        })
        .collect();
    events.push(Bytes::from_static(b"data: [DONE]\n\n"));
    events
}

/// Observations from the mock side of the connection.
#[derive(Debug, Default)]
pub struct MockStats {
    pub requests: AtomicUsize,
    pub events_sent: AtomicUsize,
    /// Set when the client hung up before the script finished.
    pub cut_short: AtomicBool,
}

struct Guard {
    stats: Arc<MockStats>,
    total: usize,
}

impl Drop for Guard {
    fn drop(&mut self) {
        if self.stats.events_sent.load(Ordering::SeqCst) < self.total {
            self.stats.cut_short.store(true, Ordering::SeqCst);
        }
    }
}

pub struct MockUpstream {
    pub url: String,
    pub stats: Arc<MockStats>,
}

impl MockUpstream {
    /// Serve `events` on an ephemeral port, pausing `delay` between events.
    pub async fn spawn(events: Vec<Bytes>, delay: Duration) -> std::io::Result<Self> {
        let stats = Arc::new(MockStats::default());
        let events = Arc::new(events);
        let app = Router::new().route(
            "/v1/chat/completions",
            post({
                let stats = Arc::clone(&stats);
                move || {
                    let stats = Arc::clone(&stats);
                    let events = Arc::clone(&events);
                    async move {
                        stats.requests.fetch_add(1, Ordering::SeqCst);
                        stats.events_sent.store(0, Ordering::SeqCst);
                        let guard = Guard {
                            stats: Arc::clone(&stats),
                            total: events.len(),
                        };
                        let stream = futures::stream::unfold((0usize, guard), move |(i, guard)| {
                            let events = Arc::clone(&events);
                            async move {
                                let ev = events.get(i)?.clone();
                                if i > 0 && !delay.is_zero() {
                                    tokio::time::sleep(delay).await;
                                }
                                guard.stats.events_sent.fetch_add(1, Ordering::SeqCst);
                                Some((Ok::<_, Infallible>(ev), (i + 1, guard)))
                            }
                        });
                        Response::builder()
                            .header(header::CONTENT_TYPE, "text/event-stream")
                            .body(Body::from_stream(stream))
                            .expect("static response")
                    }
                }
            }),
        );
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await?;
        let addr = listener.local_addr()?;
        tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self {
            url: format!("http://{addr}/v1/chat/completions"),
            stats,
        })
    }
}
