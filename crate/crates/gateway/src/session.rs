//! Per-request logs: verifier timing, relayed byte counts, interrupt window.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use async_trait::async_trait;
use cotguard_core::{MonitorReport, Verdict, VerificationRequest, Verifier, VerifyError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step_index: usize,
    /// Offset of the call start from the session start.
    pub started_ms: f64,
    pub latency_ms: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub model: Option<String>,
    pub messages: usize,
    pub problem_preview: String,
}

/// Content that reached the client while the triggering verdict was pending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterruptWindow {
    pub step_index: usize,
    pub verifier_latency_ms: f64,
    pub bytes_during_verification: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamOutcome {
    Completed,
    Interrupted,
    ClientDisconnected,
    UpstreamFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub started_at_unix_ms: u128,
    pub request_summary: RequestSummary,
    pub outcome: StreamOutcome,
    pub report: MonitorReport,
    pub timing: Vec<StepTiming>,
    /// Upstream bytes relayed to the client, excluding gateway-generated events.
    pub bytes_forwarded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interrupt_window: Option<InterruptWindow>,
}

pub fn new_session_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    format!("{:x}-{n}", unix_ms())
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

/// Verifier wrapper that records the latency of every call.
pub struct TimingVerifier {
    inner: Arc<dyn Verifier>,
    origin: Instant,
    records: Mutex<Vec<StepTiming>>,
}

impl TimingVerifier {
    pub fn new(inner: Arc<dyn Verifier>, origin: Instant) -> Self {
        Self {
            inner,
            origin,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn take(&self) -> Vec<StepTiming> {
        std::mem::take(&mut *self.records.lock().expect("timing lock"))
    }
}

#[async_trait]
impl Verifier for TimingVerifier {
    async fn verify(&self, request: &VerificationRequest) -> Result<Verdict, VerifyError> {
        let start = Instant::now();
        let result = self.inner.verify(request).await;
        self.records.lock().expect("timing lock").push(StepTiming {
            step_index: request.current_index,
            started_ms: ms(start - self.origin),
            latency_ms: ms(start.elapsed()),
            ok: result.is_ok(),
        });
        result
    }
}

pub fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Keeps recent logs in memory and appends every log to `sessions.jsonl`.
#[derive(Debug)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    capacity: usize,
    recent: Mutex<VecDeque<SessionLog>>,
    file_lock: Mutex<()>,
}

impl SessionStore {
    pub const FILE_NAME: &'static str = "sessions.jsonl";

    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            capacity: 1024,
            recent: Mutex::new(VecDeque::new()),
            file_lock: Mutex::new(()),
        }
    }

    pub fn record(&self, log: SessionLog) {
        if let Some(dir) = &self.dir {
            let _guard = self.file_lock.lock().expect("log file lock");
            if let Err(e) = append_line(dir, &log) {
                tracing::error!(error = %e, dir = %dir.display(), "failed to write session log");
            }
        }
        let mut recent = self.recent.lock().expect("session store lock");
        if recent.len() == self.capacity {
            recent.pop_front();
        }
        recent.push_back(log);
    }

    pub fn recent(&self) -> Vec<SessionLog> {
        self.recent
            .lock()
            .expect("session store lock")
            .iter()
            .cloned()
            .collect()
    }
}

fn append_line(dir: &std::path::Path, log: &SessionLog) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(SessionStore::FILE_NAME))?;
    let mut line = serde_json::to_vec(log)?;
    line.push(b'\n');
    file.write_all(&line)
}
