//! TOML configuration with dotted `key=value` overrides.
//!
//! Overrides are applied to the parsed TOML tree before it is deserialized,
//! so a misspelled key is rejected exactly like one in the file.

use std::path::{Path, PathBuf};

use pragmaqa_core::backend::BackendConfig;
use pragmaqa_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

/// One backend slot. HTTP fields are ignored for stubs; `dim` applies to
/// the stub embedder only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model_id: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub credential_env: String,
    pub rate_limit: usize,
    pub dim: usize,
}

impl Default for BackendSpec {
    fn default() -> Self {
        let base = BackendConfig::new("", "");
        Self {
            kind: BackendKind::Stub,
            endpoint: String::new(),
            model_id: String::new(),
            timeout_ms: base.timeout_ms,
            max_retries: base.max_retries,
            credential_env: String::new(),
            rate_limit: base.rate_limit,
            dim: 64,
        }
    }
}

impl BackendSpec {
    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            endpoint: self.endpoint.clone(),
            model_id: self.model_id.clone(),
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            credential_env: self.credential_env.clone(),
            rate_limit: self.rate_limit,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendsSection {
    pub completer: BackendSpec,
    pub embedder: BackendSpec,
    pub reranker: BackendSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreSection {
    pub passages: Option<PathBuf>,
    /// Built from the passages at startup when absent.
    pub index: Option<PathBuf>,
    pub chunk_size: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    /// Exemplar file; the built-in set is used when absent.
    pub exemplars: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSection {
    pub bind: String,
    pub request_timeout_ms: u64,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            request_timeout_ms: 120_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSpec {
    pub endpoint: String,
    #[serde(default)]
    pub credential_env: String,
    #[serde(default = "default_scorer_timeout")]
    pub timeout_ms: u64,
}

fn default_scorer_timeout() -> u64 {
    60_000
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub backends: BackendsSection,
    pub pipeline: PipelineConfig,
    pub store: StoreSection,
    pub inference: InferenceSection,
    pub service: ServiceSection,
    pub scorers: std::collections::BTreeMap<String, ScorerSpec>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                text.parse::<Table>().map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, spec) in [
            ("completer", &self.backends.completer),
            ("embedder", &self.backends.embedder),
            ("reranker", &self.backends.reranker),
        ] {
            match spec.kind {
                BackendKind::Http => spec
                    .backend_config()
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("backends.{name}: {e}")))?,
                BackendKind::Stub if name == "embedder" && spec.dim < 2 => {
                    return Err(ConfigError::Invalid("backends.embedder.dim must be >= 2".into()))
                }
                BackendKind::Stub => {}
            }
        }
        if self.service.request_timeout_ms == 0 {
            return Err(ConfigError::Invalid("service.request_timeout_ms must be > 0".into()));
        }
        Ok(())
    }
}

/// Parse the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.into()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(spec.into()));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(spec.into()))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}
