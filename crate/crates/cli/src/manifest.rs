use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use qaval_core::seed::sha256_hex;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        let data = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScorerRecord {
    /// The scorer as given on the command line.
    pub spec: String,
    pub description: String,
    /// False when outputs may differ between identical runs.
    pub deterministic: bool,
}

/// Provenance written next to every output file as `<output>.manifest.json`.
///
/// Contains no timestamps, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            scorer: None,
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> anyhow::Result<&mut Self> {
        self.inputs.insert(name.to_owned(), FileDigest::of(path)?);
        Ok(self)
    }

    pub fn output(&mut self, name: &str, path: &Path) -> anyhow::Result<&mut Self> {
        self.outputs.insert(name.to_owned(), FileDigest::of(path)?);
        Ok(self)
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    /// Writes the manifest next to `output` and returns its path.
    pub fn write_beside(&self, output: &Path) -> anyhow::Result<PathBuf> {
        let path = Self::path_for(output);
        self.write_to(&path)?;
        Ok(path)
    }

    pub fn write_to(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path() {
        assert_eq!(
            RunManifest::path_for(Path::new("out/updated.jsonl")),
            PathBuf::from("out/updated.jsonl.manifest.json")
        );
    }
}
