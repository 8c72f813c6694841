//! Run manifests: config hash, version, and one record per executed check.

use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub values: Map<String, Value>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

/// SHA-256 of the canonical JSON serialization of the resolved config,
/// excluding the output location.
pub fn config_hash(cfg: &RunConfig) -> String {
    let cfg = RunConfig { output: None, ..cfg.clone() };
    let text = serde_json::to_string(&cfg).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(cfg),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn push(&mut self, record: CheckRecord) {
        debug_assert!(self.checks.iter().all(|c| c.name != record.name), "duplicate check {}", record.name);
        self.passed &= record.passed;
        self.checks.push(record);
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    /// The manifest without wall-clock timings, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut m = self.clone();
        for c in &mut m.checks {
            c.seconds = 0.0;
        }
        m
    }
}

/// Runs `body` and records its outcome and wall-clock time under `name`.
/// An `Err` counts as a failed check.
pub fn timed(name: &str, body: impl FnOnce() -> anyhow::Result<(bool, Value)>) -> CheckRecord {
    let start = Instant::now();
    let outcome = body();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((passed, values)) => {
            let values = match values {
                Value::Object(m) => m,
                other => Map::from_iter([("value".to_string(), other)]),
            };
            CheckRecord { name: name.to_string(), passed, values, seconds, error: None }
        }
        Err(e) => CheckRecord { name: name.to_string(), passed: false, values: Map::new(), seconds, error: Some(format!("{e:#}")) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.output = Some("elsewhere".into());
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn errors_fail_the_manifest() {
        let mut m = RunManifest::new("verify", &RunConfig::default());
        m.push(timed("ok", || Ok((true, json!({"x": 1.0})))));
        m.push(timed("broken", || anyhow::bail!("no data")));
        assert!(!m.passed);
        assert_eq!(m.failing(), vec!["broken"]);
        assert_eq!(m.checks[1].error.as_deref(), Some("no data"));
    }
}
