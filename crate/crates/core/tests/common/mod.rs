use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

/// One scripted reply from the mock chat endpoint.
#[derive(Clone)]
pub enum Reply {
    Content(String),
    Status(u16),
    Sleep(Duration),
}

#[derive(Clone, Default)]
pub struct Mock {
    replies: Arc<Mutex<VecDeque<Reply>>>,
    pub bodies: Arc<Mutex<Vec<Value>>>,
}

impl Mock {
    pub fn calls(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }
}

async fn handle(State(mock): State<Mock>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    mock.bodies.lock().unwrap().push(body);
    let reply = mock.replies.lock().unwrap().pop_front();
    match reply {
        Some(Reply::Content(c)) => (StatusCode::OK, Json(completion(&c))),
        Some(Reply::Status(s)) => (StatusCode::from_u16(s).unwrap(), Json(json!({"error": "scripted"}))),
        Some(Reply::Sleep(d)) => {
            tokio::time::sleep(d).await;
            (StatusCode::OK, Json(completion("{}")))
        }
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"error": "script exhausted"})),
        ),
    }
}

fn completion(content: &str) -> Value {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})
}

/// Serve the mock on an ephemeral port; returns its chat-completions URL.
pub async fn spawn(replies: Vec<Reply>) -> (String, Mock) {
    let mock = Mock {
        replies: Arc::new(Mutex::new(replies.into())),
        ..Mock::default()
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(handle))
        .with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    (format!("http://{addr}/v1/chat/completions"), mock)
}
