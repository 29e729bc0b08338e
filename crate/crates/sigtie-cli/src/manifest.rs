//! Run manifests: every stage writes a JSON manifest echoing its resolved
//! configuration and the digests of the files it read, so any artifact can
//! be reproduced bit-for-bit from its manifest. Execution details that do
//! not influence output bytes (worker threads, artifact directory) are
//! deliberately not part of the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub stage: &'static str,
    pub config: serde_json::Value,
    /// input file name -> sha256 of its content
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new<C: Serialize>(stage: &'static str, config: &C) -> anyhow::Result<Self> {
        Ok(Manifest {
            tool: "sigtie",
            version: env!("CARGO_PKG_VERSION"),
            stage,
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> anyhow::Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.inputs.insert(name, file_digest(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        if let Some(name) = path.file_name() {
            self.outputs.push(name.to_string_lossy().into_owned());
        }
    }

    pub fn write(&mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.outputs.sort();
        let path = dir.join(format!("{}.manifest.json", self.stage));
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
