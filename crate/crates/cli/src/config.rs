//! AppConfig: file loading, validation and flag/env overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cotguard_core::bench::ReportFormat;
use cotguard_core::verifier::{LlmVerifier, VerifierConfig};
use cotguard_core::{MonitorConfig, OracleScript, OracleVerifier, Verifier};
use cotguard_gateway::GatewayConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VerifierKind {
    Llm,
    #[default]
    Oracle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierSection {
    pub kind: VerifierKind,
    pub llm: VerifierConfig,
    pub oracle: OracleScript,
}

impl VerifierSection {
    pub fn build(&self) -> Result<Arc<dyn Verifier>> {
        Ok(match self.kind {
            VerifierKind::Oracle => Arc::new(OracleVerifier::new(self.oracle.clone())),
            VerifierKind::Llm => Arc::new(LlmVerifier::new(self.llm.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub dataset: Option<PathBuf>,
    pub preset: Option<String>,
    pub seed: u64,
    pub n: usize,
    pub format: ReportFormat,
    pub concurrency: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            dataset: None,
            preset: None,
            seed: 0,
            n: 100,
            format: ReportFormat::Table,
            concurrency: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub log_level: String,
    pub verifier: VerifierSection,
    pub policy: MonitorConfig,
    pub gateway: GatewayConfig,
    pub bench: BenchSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            log_level: "warn".into(),
            verifier: VerifierSection::default(),
            policy: MonitorConfig::default(),
            gateway: GatewayConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", e.to_string().trim_end()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.verifier.oracle.is_valid() {
            bail!("verifier.oracle: markers must be non-empty and distinct, default_confidence within [0, 1]");
        }
        if self.verifier.kind == VerifierKind::Llm {
            self.verifier.llm.validate().map_err(anyhow::Error::msg)?;
        }
        if let Some(path) = &self.bench.dataset {
            if !path.exists() {
                bail!("bench.dataset: {} does not exist", path.display());
            }
        }
        if self.bench.concurrency == 0 {
            bail!("bench.concurrency must be at least 1");
        }
        parse_level(&self.log_level).context("log_level")?;
        self.gateway.validate()?;
        Ok(())
    }
}

pub fn parse_level(s: &str) -> Result<tracing::Level> {
    s.parse::<tracing::Level>()
        .map_err(|_| anyhow::anyhow!("unknown log level `{s}` (expected trace|debug|info|warn|error)"))
}
