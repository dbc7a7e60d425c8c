use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::nn::ParamStore;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"KCKP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    tensors: Vec<(String, Vec<usize>)>,
}

/// Named parameter tensors with the model config and seed.
///
/// Layout: `KCKP`, header length (u64 LE), JSON header, then every value as f64 LE in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub tensors: Vec<(String, Vec<usize>)>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn from_store(config: &ModelConfig, seed: u64, store: &ParamStore) -> Self {
        Checkpoint {
            config: config.clone(),
            seed,
            tensors: store.specs().iter().map(|s| (s.name.clone(), s.shape.clone())).collect(),
            values: store.values().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            seed: self.seed,
            tensors: self.tensors.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let rest = &bytes[12 + hlen..];
        let expected: usize = header.tensors.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if rest.len() != expected * 8 {
            return Err(bad(&format!("expected {expected} values, found {} bytes", rest.len())));
        }
        let values = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Checkpoint {
            config: header.config,
            seed: header.seed,
            tensors: header.tensors,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::jsonl::write_atomic(path, &self.to_bytes())
    }

    /// Copies the values into `store` after checking that names and shapes line up.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        let specs = store.specs();
        if specs.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                specs.len()
            )));
        }
        for (s, (name, shape)) in specs.iter().zip(&self.tensors) {
            if &s.name != name || &s.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: model {}{:?}, checkpoint {name}{shape:?}",
                    s.name, s.shape
                )));
            }
        }
        store.values_mut().copy_from_slice(&self.values);
        Ok(())
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
