//! Streaming chat-completions gateway with step-level reasoning monitoring.
//!
//! Requests are relayed to an upstream endpoint; the streamed reasoning is
//! teed into a monitor session while events are forwarded unmodified. When
//! the monitor halts the chain the upstream connection is dropped and the
//! client receives a single terminal `reasoning_interrupt` event.

mod extract;
pub mod mock;
mod proxy;
mod session;
mod sse;

use std::future::Future;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use cotguard_core::{MonitorConfig, Verifier};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{Delimiters, ReasoningExtractor};
pub use proxy::INTERRUPT_EVENT;
pub use session::{
    InterruptWindow, RequestSummary, SessionLog, SessionStore, StepTiming, StreamOutcome, TimingVerifier,
};
pub use sse::{parse_event, EventPayload, SseFramer};

pub const DEFAULT_UPSTREAM_KEY_ENV: &str = "COTGUARD_UPSTREAM_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub listen_address: SocketAddr,
    /// Full URL of the upstream streaming chat-completions endpoint.
    pub upstream_url: String,
    pub upstream_api_key_env: String,
    pub reasoning_delimiters: Option<Delimiters>,
    /// Directory for `sessions.jsonl`; logs stay in memory only when unset.
    pub log_dir: Option<PathBuf>,
    pub connect_timeout_ms: u64,
    /// Filled from the top-level policy section by the caller.
    #[serde(skip)]
    pub monitor: MonitorConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen_address: SocketAddr::from(([127, 0, 0, 1], 8787)),
            upstream_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            upstream_api_key_env: DEFAULT_UPSTREAM_KEY_ENV.into(),
            reasoning_delimiters: None,
            log_dir: None,
            connect_timeout_ms: 10_000,
            monitor: MonitorConfig::default(),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let url = reqwest::Url::parse(&self.upstream_url)
            .map_err(|e| GatewayError::Config(format!("gateway.upstream_url: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(GatewayError::Config(
                "gateway.upstream_url: scheme must be http or https".into(),
            ));
        }
        let port = url.port_or_known_default();
        let same_host = match url.host_str() {
            Some("localhost") => self.listen_address.ip().is_loopback(),
            Some(h) => h
                .trim_matches(|c| c == '[' || c == ']')
                .parse::<IpAddr>()
                .is_ok_and(|ip| {
                    ip == self.listen_address.ip() || (ip.is_loopback() && self.listen_address.ip().is_unspecified())
                }),
            None => false,
        };
        if same_host && port == Some(self.listen_address.port()) {
            return Err(GatewayError::Config(
                "gateway.upstream_url must not point at the gateway's own listen_address".into(),
            ));
        }
        if let Some(d) = &self.reasoning_delimiters {
            if d.open.is_empty() || d.close.is_empty() {
                return Err(GatewayError::Config(
                    "gateway.reasoning_delimiters: sentinels must be non-empty".into(),
                ));
            }
        }
        Ok(())
    }
}

struct Inner {
    config: GatewayConfig,
    verifier: Arc<dyn Verifier>,
    client: reqwest::Client,
    store: SessionStore,
    upstream_key: Option<String>,
}

/// Shared gateway state; cheap to clone.
#[derive(Clone)]
pub struct Gateway(Arc<Inner>);

impl Gateway {
    pub fn new(config: GatewayConfig, verifier: Arc<dyn Verifier>) -> Result<Self, GatewayError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_millis(config.connect_timeout_ms))
            .build()?;
        let upstream_key = std::env::var(&config.upstream_api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let store = SessionStore::new(config.log_dir.clone());
        Ok(Self(Arc::new(Inner {
            config,
            verifier,
            client,
            store,
            upstream_key,
        })))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.0.config
    }

    pub fn store(&self) -> &SessionStore {
        &self.0.store
    }

    pub(crate) fn verifier(&self) -> Arc<dyn Verifier> {
        Arc::clone(&self.0.verifier)
    }

    pub(crate) fn client(&self) -> &reqwest::Client {
        &self.0.client
    }

    pub(crate) fn upstream_key(&self) -> Option<&str> {
        self.0.upstream_key.as_deref()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/v1/chat/completions", post(proxy::chat_completions))
            .route("/v1/sessions", get(sessions))
            .route("/healthz", get(|| async { "ok" }))
            .with_state(self.clone())
    }
}

async fn sessions(State(gw): State<Gateway>) -> Json<Vec<SessionLog>> {
    Json(gw.store().recent())
}

/// Bind `config.listen_address` and serve until `shutdown` resolves.
pub async fn serve<F>(config: GatewayConfig, verifier: Arc<dyn Verifier>, shutdown: F) -> Result<(), GatewayError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let addr = config.listen_address;
    let gateway = Gateway::new(config, verifier)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| GatewayError::Bind { addr, source })?;
    tracing::info!(%addr, upstream = %gateway.config().upstream_url, "gateway listening");
    serve_on(listener, gateway, shutdown).await
}

pub async fn serve_on<F>(listener: tokio::net::TcpListener, gateway: Gateway, shutdown: F) -> Result<(), GatewayError>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, gateway.router())
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
