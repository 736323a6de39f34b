use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Provenance written next to every output artifact.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub config: Value,
    pub tool_version: &'static str,
    pub record_count: usize,
    /// Output file name -> SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, Value>,
    pub wall_time_secs: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ManifestBuilder {
    pub fn new(command: &str, inputs: &[&Path], config: Value) -> Self {
        Self {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
                config,
                tool_version: env!("CARGO_PKG_VERSION"),
                record_count: 0,
                outputs: BTreeMap::new(),
                notes: BTreeMap::new(),
                wall_time_secs: 0.0,
            },
        }
    }

    pub fn records(&mut self, n: usize) {
        self.manifest.record_count = n;
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.manifest.notes.insert(key.to_string(), value.into());
    }

    /// Writes an output file and records its digest.
    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        crate::write_file(path, bytes)?;
        self.manifest
            .outputs
            .insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.manifest.wall_time_secs = self.started.elapsed().as_secs_f64();
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        crate::write_file(path, text.as_bytes())
    }
}

/// `<out>.manifest.json` unless overridden.
pub fn default_path(out: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    })
}
