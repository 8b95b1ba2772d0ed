use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub params: BTreeMap<String, String>,
    /// Path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            ..Default::default()
        }
    }

    /// Reads an existing manifest, or starts a fresh one.
    pub fn open(path: &Path, config_hash: String) -> Result<Self, CliError> {
        if !path.exists() {
            return Ok(Self::new(config_hash));
        }
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut m: Self = serde_json::from_str(&src)
            .map_err(|e| CliError::Contract(format!("{}: {e}", path.display())))?;
        m.tool = env!("CARGO_PKG_NAME").to_string();
        m.version = env!("CARGO_PKG_VERSION").to_string();
        m.config_hash = config_hash;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let body = serde_json::to_string_pretty(self).expect("manifest serialises") + "\n";
        crate::io::write_text(path, &body)
    }

    /// Every output path across stages.
    pub fn outputs(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.stages.values().flat_map(|s| s.outputs.keys().map(String::as_str)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// The manifest with all timings zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut m = self.clone();
        m.stages.values_mut().for_each(|s| s.seconds = 0.0);
        m
    }
}
