//! Artifact collection, atomic writes and the content-hash manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const RESOLVED_CONFIG_NAME: &str = "resolved_config.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub inputs: Vec<InputEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Artifacts held in memory until the stage completes.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
    inputs: BTreeMap<String, String>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), bytes.into());
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::runtime(format!("serialize {name}: {e}")))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// Record an input file by content hash.
    pub fn input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.files.keys()
    }

    /// Write every artifact atomically, then the manifest.
    pub fn commit(self, dir: &Path, command: &str) -> CliResult<Manifest> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut artifacts = Vec::new();
        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
            artifacts.push(ArtifactEntry {
                path: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            inputs: self
                .inputs
                .into_iter()
                .map(|(path, sha256)| InputEntry { path, sha256 })
                .collect(),
            artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::runtime(format!("serialize manifest: {e}")))?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp"));
    let err = |e: std::io::Error| CliError::runtime(format!("cannot write {}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
    }
    fs::rename(&tmp, path).map_err(err)
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("invalid manifest {}: {e}", path.display())))
}

/// Load an artifact listed in a manifest, checking its hash.
pub fn load_artifact(manifest_path: &Path, entry: &ArtifactEntry) -> CliResult<Vec<u8>> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let path = dir.join(&entry.path);
    let bytes = fs::read(&path).map_err(|_| {
        CliError::validation(format!(
            "missing artifact {} (sha256 {})",
            path.display(),
            entry.sha256
        ))
    })?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(CliError::validation(format!(
            "artifact {} does not match sha256 {}",
            path.display(),
            entry.sha256
        )));
    }
    Ok(bytes)
}

/// CSV text from a header and rows of already-formatted fields.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::runtime(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::runtime(format!("csv: {e}")))
}

pub fn num(v: f64) -> String {
    latent_treat::data::io::fmt_f64(v)
}
