//! Per-command manifests: the full run config, its hash and a digest of
//! every artifact. Loading re-checks all of them.

use std::collections::BTreeMap;
use std::path::Path;

use anisonet::pipeline::{file_digest, write_json};
use anisonet::{Error, NetworkKind, Result};
use serde::{Deserialize, Serialize};

use crate::runconfig::RunConfig;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub kind: Option<NetworkKind>,
    pub config_hash: String,
    pub config: RunConfig,
    /// File name relative to the manifest's directory, then its SHA-256.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, kind: Option<NetworkKind>, config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            kind,
            config_hash: config.hash(),
            config: config.clone(),
            files: BTreeMap::new(),
        }
    }

    pub fn record<S: AsRef<str>>(&mut self, dir: &Path, names: &[S]) -> Result<()> {
        for name in names {
            let name = name.as_ref();
            self.files.insert(name.to_string(), file_digest(&dir.join(name))?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(FILE_NAME), self)
    }

    /// Reads the manifest in `dir` and checks the config hash and every file digest.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.config.hash() != m.config_hash {
            return Err(Error::config("manifest.config_hash", "does not match the embedded config"));
        }
        for (name, digest) in &m.files {
            if &file_digest(&dir.join(name))? != digest {
                return Err(Error::config("manifest.files", format!("{name} changed since it was written")));
            }
        }
        Ok(m)
    }
}
