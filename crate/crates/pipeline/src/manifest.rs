//! Run manifests and atomic artifact writes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// A file produced or consumed by a stage, by name relative to the output
/// directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Primary outputs of the stages this one read from.
    pub parents: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub metrics: BTreeMap<String, Value>,
    pub wall_time_s: f64,
}

impl RunManifest {
    /// The manifest without its timing, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn file_name(stage: &str) -> String {
        format!("{stage}.manifest.json")
    }

    pub fn load(dir: &Path, stage: &str) -> Result<Option<Self>> {
        let path = dir.join(Self::file_name(stage));
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_slice(&text)
            .map(Some)
            .map_err(|e| PipelineError::format(path.display().to_string(), e.column() as u64, e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(Self::file_name(&self.stage)), &json)
    }

    /// True when every recorded output still exists with its recorded hash.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs.iter().all(|a| {
            std::fs::read(dir.join(&a.file))
                .map(|b| sha256_hex(&b) == a.sha256)
                .unwrap_or(false)
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| PipelineError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| PipelineError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| PipelineError::io(path, e.error))?;
    Ok(())
}

/// Serializes rows as CSV with a header line.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| PipelineError::Other(e.to_string()))?;
    }
    w.into_inner().map_err(|e| PipelineError::Other(e.to_string()))
}
