//! Step-level reasoning-safety monitoring.
//!
//! The crate splits a model's chain-of-thought into steps, asks a verifier
//! to judge each step against a nine-type taxonomy of unsafe reasoning, and
//! interrupts the chain once an unsafe verdict reaches the configured
//! confidence threshold. The [`bench`] module replays annotated corpora and
//! scores localization and classification accuracy.

pub mod bench;
pub mod chain;
pub mod monitor;
pub mod taxonomy;
pub mod verdict;
pub mod verifier;

pub use chain::{segment_batch, AnnotatedChain, ChainLabel, ChainState, ReasoningStep, StreamSegmenter};
pub use monitor::{
    monitor_replay, monitor_stream, CancelSignal, FailurePolicy, MonitorConfig, MonitorReport, MonitorSession,
    Termination,
};
pub use taxonomy::{all_types, lookup, ErrorCode, ErrorType};
pub use verdict::{decide, parse_verdict, validate_quote, Decision, Flag, InterventionPolicy, Verdict};
pub use verifier::{OracleScript, OracleVerifier, VerificationRequest, Verifier, VerifyError};
