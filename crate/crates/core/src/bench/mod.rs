//! Benchmark harness: JSONL datasets, corpus-scale replay and metrics.

mod generator;
mod metrics;

use std::io::{BufRead, Write};
use std::sync::Arc;

use futures::StreamExt;

use crate::chain::AnnotatedChain;
use crate::monitor::{monitor_replay, MonitorConfig, MonitorReport};
use crate::verifier::Verifier;

pub use generator::{
    generate_loop_chain, generate_synthetic, generate_with_script, PositionRule, Presets, SignatureError,
    SignatureSpec, TEMPLATE_VERSION,
};
pub use metrics::{report, FalsePositiveStats, MetricBundle, Metrics, ReportFormat, SkippedRecord, NO_ERROR_COLUMN};

#[derive(Debug, Default)]
pub struct DatasetLoad {
    pub records: Vec<AnnotatedChain>,
    pub errors: Vec<SkippedRecord>,
}

/// Read AnnotatedChain JSONL. Blank lines are ignored; malformed lines are
/// collected with their 1-based line number instead of aborting the load.
pub fn load_jsonl<R: BufRead>(reader: R) -> std::io::Result<DatasetLoad> {
    let mut out = DatasetLoad::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotatedChain>(&line) {
            Ok(rec) => out.records.push(rec),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_string));
                out.errors.push(SkippedRecord {
                    id,
                    line: Some(i + 1),
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, chains: &[AnnotatedChain]) -> std::io::Result<()> {
    for chain in chains {
        serde_json::to_writer(&mut writer, chain)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Chains replayed concurrently.
    pub concurrency: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { concurrency: 8 }
    }
}

#[derive(Debug, Default)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// One report per record that was replayed, in dataset order.
    pub reports: Vec<MonitorReport>,
}

pub async fn evaluate(dataset: &[AnnotatedChain], verifier: Arc<dyn Verifier>, config: MonitorConfig) -> Metrics {
    evaluate_detailed(dataset, verifier, config, EvalOptions::default())
        .await
        .metrics
}

/// Replay every record and score it. Invalid records are skipped and listed
/// in [`Metrics::skipped`]; clean records feed the false-positive counters.
pub async fn evaluate_detailed(
    dataset: &[AnnotatedChain],
    verifier: Arc<dyn Verifier>,
    config: MonitorConfig,
    options: EvalOptions,
) -> Evaluation {
    let results: Vec<_> = futures::stream::iter(dataset.iter())
        .map(|chain| {
            let verifier = Arc::clone(&verifier);
            async move { (chain, monitor_replay(chain, verifier, config).await) }
        })
        .buffered(options.concurrency.max(1))
        .collect()
        .await;

    let mut eval = Evaluation::default();
    for (chain, result) in results {
        match result {
            Ok(report) => {
                eval.metrics.record(&chain.source, &chain.label, &report);
                eval.reports.push(report);
            }
            Err(e) => {
                tracing::warn!(id = %chain.id, error = %e, "skipping record");
                eval.metrics.skipped.push(SkippedRecord {
                    id: Some(chain.id.clone()),
                    line: None,
                    reason: e.to_string(),
                });
            }
        }
    }
    eval
}
