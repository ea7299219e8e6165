use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, Seeds};
use crate::error::{Error, Result};

/// What a command ran with and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    /// Output-relative artifact path to SHA-256 hex digest.
    pub checksums: BTreeMap<String, String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            seeds: config.seeds(),
            checksums: BTreeMap::new(),
            timings: BTreeMap::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn count(&mut self, key: &str, value: impl Serialize) {
        self.counts.insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    /// Records the digest of `rel` (a file, or every file under a directory).
    pub fn checksum(&mut self, out: &Path, rel: &str) -> Result<()> {
        let path = out.join(rel);
        if path.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(&path)
                .map_err(|e| Error::unreadable(&path, e))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            entries.sort();
            for name in entries {
                self.checksum(out, &format!("{rel}/{name}"))?;
            }
        } else {
            self.checksums.insert(rel.into(), sha256_file(&path)?);
        }
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(format!("manifest-{}.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::unreadable(&path, e))
    }

    /// Checks every recorded digest against the files currently on disk.
    pub fn verify(&self, out: &Path) -> Result<Vec<String>> {
        let mut mismatched = Vec::new();
        for (rel, digest) in &self.checksums {
            if sha256_file(&out.join(rel)).ok().as_deref() != Some(digest.as_str()) {
                mismatched.push(rel.clone());
            }
        }
        Ok(mismatched)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::unreadable(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
