//! Output-directory manifests: resolved config echo, seed, and content
//! checksums. Manifests carry no timestamps or absolute paths, so repeated
//! runs with the same inputs produce identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Extra command-specific facts (resolved threshold, totals, ...).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub facts: BTreeMap<String, serde_json::Value>,
    /// file name -> sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            facts: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn fact(&mut self, key: &str, value: impl Serialize) {
        self.facts.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable fact"),
        );
    }

    /// Records a checksum for a file already written under `dir`.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let bytes =
            std::fs::read(dir.join(name)).with_context(|| format!("hashing output {name}"))?;
        let digest = Sha256::digest(&bytes);
        self.outputs
            .insert(name.to_string(), format!("sha256:{digest:x}"));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}
