//! Run manifests: one JSON sidecar per command invocation recording the
//! resolved configuration, input fingerprints, output paths and totals —
//! enough to reproduce the run byte-identically in unthrottled mode.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
    pub model_paths: Vec<String>,
    pub output_paths: Vec<String>,
    pub wall_time_ms: u128,
    pub event_counts: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_owned(),
            config,
            dataset_fingerprint: None,
            model_paths: Vec::new(),
            output_paths: Vec::new(),
            wall_time_ms: 0,
            event_counts: BTreeMap::new(),
        }
    }

    pub fn count(&mut self, key: &str, value: u64) {
        self.event_counts.insert(key.to_owned(), value);
    }

    /// Write the manifest next to `primary_output` as
    /// `<primary_output>.manifest.json`.
    pub fn write_next_to(&self, primary_output: &Path) -> std::io::Result<std::path::PathBuf> {
        let mut path = primary_output.as_os_str().to_owned();
        path.push(".manifest.json");
        let path = std::path::PathBuf::from(path);
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body)?;
        Ok(path)
    }
}

/// Hex SHA-256 of a byte slice; used for dataset and artifact fingerprints.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}
