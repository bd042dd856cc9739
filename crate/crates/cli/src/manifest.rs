//! Run manifests: every subcommand writes one next to its artifacts with
//! the fully resolved configuration, so any artifact can be regenerated
//! bit-for-bit from the manifest alone (`--config manifest.json`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, ErrorKind};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved configuration, the same schema `--config` accepts.
    pub config: serde_json::Value,
    /// Generator parameters of every dataset the run touched.
    pub dataset_params: Vec<DatasetRecord>,
    /// Paths written, relative to the manifest's directory.
    pub artifacts: Vec<String>,
    /// Extra command-specific records (normalization ranges, warnings).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dataset: String,
    pub params: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            tool: "vaelab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            dataset_params: Vec::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn record_dataset(&mut self, spec: &vaelab::datasets::DatasetSpec) {
        let record = DatasetRecord {
            dataset: spec.name().to_string(),
            params: spec
                .manifest_params()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        };
        if !self
            .dataset_params
            .iter()
            .any(|d| d.dataset == record.dataset)
        {
            self.dataset_params.push(record);
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::new(ErrorKind::Io, format!("manifest encode: {e}")))?;
        std::fs::write(&path, body + "\n")
            .map_err(|e| CliError::new(ErrorKind::Io, format!("write {path:?}: {e}")))?;
        Ok(())
    }
}

/// Loads a config file for a subcommand. Accepts either a flat config
/// object or a full manifest (whose `config` field is then used), so a run
/// can be replayed straight from its manifest.
pub fn load_config_value(path: &Path, expect_command: &str) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(ErrorKind::Config, format!("read {path:?}: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::new(ErrorKind::Config, format!("parse {path:?}: {e}")))?;
    if let Some(cmd) = value.get("command").and_then(|c| c.as_str()) {
        if cmd != expect_command {
            return Err(CliError::new(
                ErrorKind::Config,
                format!("manifest is for {cmd:?}, not {expect_command:?}"),
            ));
        }
        return value
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::new(ErrorKind::Config, "manifest has no config".into()));
    }
    Ok(value)
}
