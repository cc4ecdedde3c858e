//! Per-stage manifests recording input and output hashes, used to skip
//! stages whose inputs and outputs are unchanged.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub fingerprint: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Path as recorded in a manifest: relative to `root` when inside it.
fn display(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

pub fn manifest_path(root: &Path, stage: &str) -> PathBuf {
    root.join(stage).join("manifest.json")
}

pub fn read_manifest(root: &Path, stage: &str) -> Option<StageManifest> {
    let text = fs::read_to_string(manifest_path(root, stage)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Runs `body` unless the stored manifest shows identical inputs and intact
/// outputs. `outputs` are relative to `root`.
pub fn run_stage(
    root: &Path,
    stage: &str,
    config_hash: &str,
    inputs: &[PathBuf],
    outputs: &[&str],
    body: impl FnOnce() -> Result<()>,
) -> Result<StageStatus> {
    let mut input_hashes = Vec::with_capacity(inputs.len());
    for p in inputs {
        if !p.is_file() {
            return Err(Error::MissingArtifact {
                stage: stage.to_string(),
                path: p.clone(),
            });
        }
        input_hashes.push(FileHash {
            path: display(root, p),
            sha256: sha256_file(p)?,
        });
    }
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(config_hash.as_bytes());
    for f in &input_hashes {
        h.update([0]);
        h.update(f.sha256.as_bytes());
    }
    let fingerprint = hex::encode(h.finalize());

    if let Some(m) = read_manifest(root, stage) {
        let intact = m.fingerprint == fingerprint
            && m.outputs.len() == outputs.len()
            && m.outputs.iter().all(|o| {
                sha256_file(&root.join(&o.path)).is_ok_and(|h| h == o.sha256)
            });
        if intact {
            log::info!("stage {stage}: up to date");
            return Ok(StageStatus::Skipped);
        }
    }
    let dir = root.join(stage);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    log::info!("stage {stage}: running");
    body()?;
    let mut output_hashes = Vec::with_capacity(outputs.len());
    for o in outputs {
        let p = root.join(o);
        if !p.is_file() {
            return Err(Error::Structure(format!(
                "stage {stage} did not produce {}",
                p.display()
            )));
        }
        output_hashes.push(FileHash {
            path: o.to_string(),
            sha256: sha256_file(&p)?,
        });
    }
    let manifest = StageManifest {
        stage: stage.to_string(),
        config_hash: config_hash.to_string(),
        fingerprint,
        inputs: input_hashes,
        outputs: output_hashes,
    };
    let path = manifest_path(root, stage);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(StageStatus::Ran)
}
