use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use gpmidas::ModelConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

/// Run record written next to every set of artifacts. Paths are stored
/// relative to the output directory (outputs) or by file name (inputs), so
/// repeated runs in different directories produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
    pub config_sha256: String,
    pub arguments: BTreeMap<String, Value>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, config: &ModelConfig, seed: u64) -> Self {
        let text = config.to_config_string();
        Manifest {
            command: command.to_string(),
            version: crate::VERSION.to_string(),
            seed,
            config_sha256: sha256_hex(text.as_bytes()),
            config: text,
            arguments: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.arguments.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serialisable argument"),
        );
        self
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<&mut Self> {
        let mut meta = BTreeMap::new();
        meta.insert("role".to_string(), Value::from(role));
        self.inputs.push(FileEntry {
            path: path.file_name().map_or_else(
                || path.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            ),
            sha256: file_sha256(path)?,
            meta,
        });
        Ok(self)
    }

    pub fn output(
        &mut self,
        out_dir: &Path,
        rel: &str,
        meta: BTreeMap<String, Value>,
    ) -> Result<&mut Self> {
        self.outputs.push(FileEntry {
            path: rel.to_string(),
            sha256: file_sha256(&out_dir.join(rel))?,
            meta,
        });
        Ok(self)
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
