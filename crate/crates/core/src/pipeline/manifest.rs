use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub digest: String,
    /// Output paths relative to the workdir.
    pub outputs: Vec<String>,
}

/// Input digests of the last successful run of each stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, workdir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        crate::jsonl::write_atomic(&workdir.join(MANIFEST_FILE), &bytes)
    }

    /// True when the stage last ran with `digest` and its outputs are still present.
    pub fn is_fresh(&self, stage: &str, digest: &str, workdir: &Path) -> bool {
        self.stages
            .get(stage)
            .is_some_and(|r| r.digest == digest && r.outputs.iter().all(|o| workdir.join(o).exists()))
    }

    pub fn record(&mut self, stage: &str, digest: String, outputs: Vec<String>) {
        self.stages.insert(stage.to_string(), StageRecord { digest, outputs });
    }
}

/// An input file together with the stage that produces it (for error messages).
#[derive(Debug, Clone)]
pub struct Input {
    pub path: PathBuf,
    pub producer: &'static str,
}

impl Input {
    pub fn new(path: impl Into<PathBuf>, producer: &'static str) -> Self {
        Input {
            path: path.into(),
            producer,
        }
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest over a config fragment and the contents of every input.
pub fn stage_digest(config: &serde_json::Value, inputs: &[Input]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    for input in inputs {
        if !input.path.exists() {
            return Err(Error::MissingArtifact {
                stage: input.producer.to_string(),
                path: input.path.clone(),
            });
        }
        h.update(input.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        h.update(file_digest(&input.path)?);
    }
    Ok(hex::encode(h.finalize()))
}
