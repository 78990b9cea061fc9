use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to replay a run: inputs by digest, the config
/// snapshot, the root seed and the tool version. Artifact paths are
/// relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    /// Preprocessing artifacts.
    pub artifacts: Vec<FileDigest>,
    /// Files written by later commands, keyed by role.
    #[serde(default)]
    pub outputs: BTreeMap<String, FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest(role: &str, path: &Path, base: Option<&Path>) -> Result<FileDigest, CliError> {
    let full = base.map_or_else(|| path.to_path_buf(), |b| b.join(path));
    Ok(FileDigest {
        role: role.to_string(),
        path: path.to_path_buf(),
        sha256: sha256_file(&full)?,
    })
}

impl RunManifest {
    pub fn load(run: &Path) -> Result<Self, CliError> {
        let path = run.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| {
            CliError::Usage(format!(
                "{} is not a preprocessed run ({}: {e})",
                run.display(),
                path.display()
            ))
        })?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Stale(format!("unreadable manifest {}: {e}", path.display())))
    }

    pub fn save(&self, run: &Path) -> Result<(), CliError> {
        let path = run.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(path.display(), e))
    }

    /// Every preprocessing artifact still hashes to its recorded digest.
    pub fn verify_artifacts(&self, run: &Path) -> Result<(), CliError> {
        for a in &self.artifacts {
            let full = run.join(&a.path);
            let actual = sha256_file(&full)
                .map_err(|_| CliError::Stale(format!("artifact {} is missing", full.display())))?;
            if actual != a.sha256 {
                return Err(CliError::Stale(format!(
                    "{} changed since preprocessing (digest {actual}, manifest {})",
                    full.display(),
                    a.sha256
                )));
            }
        }
        Ok(())
    }

    /// The preprocessing half of `config` matches what built the artifacts.
    pub fn verify_config(&self, config: &RunConfig) -> Result<(), CliError> {
        if self.config.preprocessing_key() != config.preprocessing_key() {
            return Err(CliError::Stale(
                "config differs from the preprocessing snapshot in seed, [graphs], [augment] \
                 or [split]; rerun preprocess"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn record_output(&mut self, run: &Path, role: &str, rel: &Path) -> Result<(), CliError> {
        self.outputs
            .insert(role.to_string(), digest(role, rel, Some(run))?);
        Ok(())
    }
}
