//! Provenance records written next to every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::fsutil::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// Input name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>, config_hash: Option<String>) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: blockies_core::VERSION.into(),
            command: command.into(),
            seed,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            settings: BTreeMap::new(),
        }
    }

    pub fn input(mut self, name: &str, bytes: &[u8]) -> Self {
        self.inputs.insert(name.into(), blockies_core::hash::sha256_hex(bytes));
        self
    }

    pub fn output(mut self, name: &str, bytes: &[u8]) -> Self {
        self.outputs.insert(name.into(), blockies_core::hash::sha256_hex(bytes));
        self
    }

    pub fn setting<T: Serialize>(mut self, name: &str, value: &T) -> Self {
        self.settings.insert(name.into(), serde_json::to_value(value).expect("serializable setting"));
        self
    }

    /// Writes `<artifact>.provenance.json` next to `artifact`.
    pub fn write_beside(&self, artifact: &Path) -> Result<PathBuf> {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".provenance.json");
        let path = artifact.with_file_name(name);
        write_json(&path, self)?;
        Ok(path)
    }
}
