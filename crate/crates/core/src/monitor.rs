//! Per-chain monitoring sessions.
//!
//! A [`MonitorSession`] owns the rolling [`ChainState`] of one chain, sends
//! each completed step to a [`Verifier`], applies the intervention policy and
//! accumulates a [`MonitorReport`]. [`monitor_replay`] drives a session over a
//! stored chain; [`monitor_stream`] drives it from a chunk stream, reading
//! ahead while a verification call is outstanding.

use std::collections::VecDeque;
use std::fmt::Display;
use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll, Waker};

use futures::future::{select, Either};
use futures::{Stream, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{AnnotatedChain, ChainError, ChainState, ReasoningStep, RecordError, StreamSegmenter};
use crate::taxonomy::ErrorCode;
use crate::verdict::{decide, validate_quote, Decision, InterventionPolicy, Verdict};
use crate::verifier::{VerificationRequest, Verifier, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    Interrupted,
    BudgetExceeded,
    VerifierFailed,
    /// The chunk source failed before the chain ended.
    SourceFailed,
}

/// What to do with a step the verifier could not judge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Record the step as unverified and keep going.
    #[default]
    FailOpen,
    /// Stop the chain with [`Termination::VerifierFailed`].
    FailClosed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    #[serde(flatten)]
    pub policy: InterventionPolicy,
    pub on_verifier_failure: FailurePolicy,
}

impl MonitorConfig {
    pub fn new(policy: InterventionPolicy) -> Self {
        Self {
            policy,
            on_verifier_failure: FailurePolicy::FailOpen,
        }
    }

    pub fn fail_closed(mut self) -> Self {
        self.on_verifier_failure = FailurePolicy::FailClosed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub chain_id: String,
    pub verdicts: Vec<Verdict>,
    pub first_unsafe_position: Option<usize>,
    pub first_unsafe_type: Option<ErrorCode>,
    pub termination: Termination,
    pub steps_seen: usize,
    pub steps_verified: usize,
    /// Steps whose verification failed and were passed through (fail-open).
    pub unverified_steps: Vec<usize>,
    /// Unsafe verdicts whose quote could not be located in the step text.
    pub unlocated_quotes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MonitorReport {
    fn new(chain_id: String) -> Self {
        Self {
            chain_id,
            verdicts: Vec::new(),
            first_unsafe_position: None,
            first_unsafe_type: None,
            termination: Termination::Completed,
            steps_seen: 0,
            steps_verified: 0,
            unverified_steps: Vec::new(),
            unlocated_quotes: Vec::new(),
            error: None,
        }
    }

    /// The verdict that triggered the interrupt, if any.
    pub fn triggering_verdict(&self) -> Option<&Verdict> {
        let pos = self.first_unsafe_position?;
        self.verdicts.iter().find(|v| v.step_index() == pos)
    }
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("session already terminated")]
    Terminated,
}

/// Outcome of admitting a step into the session.
#[derive(Debug)]
pub enum StepStart {
    /// Ask the verifier about this request.
    Verify(VerificationRequest),
    /// The session terminated without a verifier call (budget guard).
    Stopped,
}

pub struct MonitorSession {
    state: ChainState,
    config: MonitorConfig,
    verifier: Arc<dyn Verifier>,
    report: MonitorReport,
    terminated: bool,
}

impl std::fmt::Debug for MonitorSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MonitorSession")
            .field("state", &self.state)
            .field("config", &self.config)
            .field("report", &self.report)
            .field("terminated", &self.terminated)
            .finish_non_exhaustive()
    }
}

impl MonitorSession {
    pub fn new(
        chain_id: impl Into<String>,
        problem: impl Into<String>,
        background: Option<String>,
        verifier: Arc<dyn Verifier>,
        config: MonitorConfig,
    ) -> Result<Self, MonitorError> {
        Ok(Self {
            state: ChainState::new(problem, background)?,
            config,
            verifier,
            report: MonitorReport::new(chain_id.into()),
            terminated: false,
        })
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn report(&self) -> &MonitorReport {
        &self.report
    }

    pub fn verifier(&self) -> Arc<dyn Verifier> {
        Arc::clone(&self.verifier)
    }

    /// Admit the next step. Applies the budget guard before any verifier call.
    pub fn begin_step(&mut self, step: &ReasoningStep) -> Result<StepStart, MonitorError> {
        if self.terminated {
            return Err(MonitorError::Terminated);
        }
        if step.index != self.report.steps_seen {
            return Err(ChainError::NonContiguous {
                expected: self.report.steps_seen,
                got: step.index,
            }
            .into());
        }
        self.report.steps_seen += 1;
        if self.report.steps_seen > self.config.policy.max_steps() {
            self.terminate(Termination::BudgetExceeded);
            return Ok(StepStart::Stopped);
        }
        Ok(StepStart::Verify(VerificationRequest::from_state(
            &self.state,
            step.text.clone(),
        )))
    }

    /// Apply the verifier's answer for the step most recently admitted.
    pub fn finish_step(&mut self, step: ReasoningStep, result: Result<Verdict, VerifyError>) -> Decision {
        debug_assert!(!self.terminated);
        let result = result.and_then(|v| {
            if v.step_index() == step.index {
                Ok(v)
            } else {
                Err(VerifyError::BackendUnavailable {
                    attempts: 1,
                    last: format!("verdict for step {} returned for step {}", v.step_index(), step.index),
                })
            }
        });
        match result {
            Ok(verdict) => {
                self.report.steps_verified += 1;
                if verdict.is_unsafe() && !validate_quote(&verdict, &step.text) {
                    self.report.unlocated_quotes.push(step.index);
                }
                let decision = decide(&verdict, &self.config.policy);
                if decision == Decision::Interrupt {
                    self.report.first_unsafe_position = Some(step.index);
                    self.report.first_unsafe_type = verdict.error_type();
                    self.report.verdicts.push(verdict);
                    self.terminate(Termination::Interrupted);
                } else {
                    self.report.verdicts.push(verdict);
                    self.append(step);
                }
                decision
            }
            Err(e) => {
                tracing::warn!(step = step.index, error = %e, "step could not be verified");
                self.report.unverified_steps.push(step.index);
                match self.config.on_verifier_failure {
                    FailurePolicy::FailOpen => {
                        self.append(step);
                        Decision::Continue
                    }
                    FailurePolicy::FailClosed => {
                        self.report.error = Some(e.to_string());
                        self.terminate(Termination::VerifierFailed);
                        Decision::Interrupt
                    }
                }
            }
        }
    }

    pub async fn on_step(&mut self, step: ReasoningStep) -> Result<Decision, MonitorError> {
        match self.begin_step(&step)? {
            StepStart::Stopped => Ok(Decision::Interrupt),
            StepStart::Verify(request) => {
                let result = self.verifier.verify(&request).await;
                Ok(self.finish_step(step, result))
            }
        }
    }

    pub fn fail_source(&mut self, error: impl Display) {
        if !self.terminated {
            self.report.error = Some(error.to_string());
            self.terminate(Termination::SourceFailed);
        }
    }

    pub fn finish(self) -> MonitorReport {
        self.report
    }

    fn append(&mut self, step: ReasoningStep) {
        self.state.push(step).expect("session admits steps in order");
    }

    fn terminate(&mut self, how: Termination) {
        self.terminated = true;
        self.report.termination = how;
    }
}

/// Replay a stored chain through a fresh session.
pub async fn monitor_replay(
    chain: &AnnotatedChain,
    verifier: Arc<dyn Verifier>,
    config: MonitorConfig,
) -> Result<MonitorReport, MonitorError> {
    let steps = chain.validate()?;
    let mut session = MonitorSession::new(&chain.id, &chain.problem, chain.context.clone(), verifier, config)?;
    for step in steps {
        if session.on_step(step).await? == Decision::Interrupt {
            break;
        }
    }
    Ok(session.finish())
}

type Inflight = Pin<Box<dyn Future<Output = (ReasoningStep, Result<Verdict, VerifyError>)> + Send>>;

/// Drive `session` from a stream of text chunks.
///
/// Chunks keep being read and segmented while a verification call is in
/// flight; verdicts are applied strictly in step order. On any early
/// termination `cancel` is signalled and the source is dropped without
/// being read further.
pub async fn monitor_stream<S, E>(mut session: MonitorSession, mut source: S, cancel: &CancelSignal) -> MonitorReport
where
    S: Stream<Item = Result<String, E>> + Unpin,
    E: Display,
{
    let mut segmenter = StreamSegmenter::new();
    let mut queue: VecDeque<ReasoningStep> = VecDeque::new();
    let mut inflight: Option<Inflight> = None;
    let mut source_done = false;

    loop {
        while inflight.is_none() && !session.is_terminated() {
            let Some(step) = queue.pop_front() else { break };
            match session.begin_step(&step) {
                Ok(StepStart::Verify(request)) => {
                    let verifier = session.verifier();
                    inflight = Some(Box::pin(async move {
                        let result = verifier.verify(&request).await;
                        (step, result)
                    }));
                }
                Ok(StepStart::Stopped) => {}
                Err(e) => session.fail_source(e),
            }
        }
        if session.is_terminated() {
            break;
        }
        let item = match (source_done, inflight.take()) {
            (true, None) => break,
            (true, Some(call)) => {
                let (step, result) = call.await;
                session.finish_step(step, result);
                continue;
            }
            (false, None) => source.next().await,
            (false, Some(call)) => match select(source.next(), call).await {
                Either::Left((item, call)) => {
                    inflight = Some(call);
                    item
                }
                Either::Right(((step, result), _)) => {
                    session.finish_step(step, result);
                    continue;
                }
            },
        };
        match item {
            Some(Ok(chunk)) => match segmenter.feed(&chunk) {
                Ok(steps) => queue.extend(steps),
                Err(e) => session.fail_source(e),
            },
            Some(Err(e)) => session.fail_source(e),
            None => {
                queue.extend(segmenter.flush());
                source_done = true;
            }
        }
    }

    let report = session.finish();
    if report.termination != Termination::Completed {
        cancel.cancel();
    }
    report
}

/// Idempotent, cloneable cancellation flag with an awaitable form.
#[derive(Clone, Default)]
pub struct CancelSignal(Arc<CancelInner>);

#[derive(Default)]
struct CancelInner {
    cancelled: AtomicBool,
    wakers: Mutex<Vec<Waker>>,
}

impl std::fmt::Debug for CancelSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("CancelSignal").field(&self.is_cancelled()).finish()
    }
}

impl CancelSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        if !self.0.cancelled.swap(true, Ordering::SeqCst) {
            let wakers = std::mem::take(&mut *self.0.wakers.lock().expect("cancel waker lock"));
            for w in wakers {
                w.wake();
            }
        }
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.cancelled.load(Ordering::SeqCst)
    }

    /// Resolves once [`cancel`](Self::cancel) has been called.
    pub fn cancelled(&self) -> Cancelled {
        Cancelled(self.clone())
    }
}

#[derive(Debug)]
pub struct Cancelled(CancelSignal);

impl Future for Cancelled {
    type Output = ();

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        if self.0.is_cancelled() {
            return Poll::Ready(());
        }
        {
            let mut wakers = self.0 .0.wakers.lock().expect("cancel waker lock");
            if !wakers.iter().any(|w| w.will_wake(cx.waker())) {
                wakers.push(cx.waker().clone());
            }
        }
        if self.0.is_cancelled() {
            Poll::Ready(())
        } else {
            Poll::Pending
        }
    }
}
