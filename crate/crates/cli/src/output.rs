//! Run directories: atomically written artifacts plus `manifest.json`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use perceptloco::io::write_atomic;
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub results: Value,
}

pub struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    pub fn new(dir: &Path, command: &str, seed: u64, config: Value) -> Self {
        Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                config,
                seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                outputs: Vec::new(),
                results: Value::Null,
            },
        }
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_ref()).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn set_results(&mut self, results: Value) {
        self.manifest.results = results;
    }

    /// Writes the manifest last so its presence marks a complete run.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
