use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result, Target};

const MAGIC: &[u8; 4] = b"KEMB";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Fixed-width float rows indexed by subject id.
///
/// On disk: a 24-byte header (`KEMB`, version, target, normalized flag, dim, count), row-major
/// little-endian `f32` rows, and a sidecar `<file>.ids` listing one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    target: Target,
    dim: usize,
    normalized: bool,
    ids: Vec<u32>,
    data: Vec<f32>,
    index: HashMap<u32, usize>,
}

impl EmbeddingTable {
    pub fn new(target: Target, dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        EmbeddingTable {
            target,
            dim,
            normalized: false,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn push(&mut self, id: u32, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: row.len(),
            });
        }
        if self.index.insert(id, self.ids.len()).is_some() {
            return Err(Error::Config(format!("duplicate {} id {id} in embedding table", self.target)));
        }
        self.ids.push(id);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, id: u32) -> Option<&[f32]> {
        self.index
            .get(&id)
            .map(|&r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f32])> {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim))
    }

    /// Ids of all-zero rows (empty texts).
    pub fn zero_rows(&self) -> Vec<u32> {
        self.iter()
            .filter(|(_, r)| r.iter().all(|&x| x == 0.0))
            .map(|(id, _)| id)
            .collect()
    }

    /// L2-normalizes every row; zero rows are left as they are.
    pub fn normalized(&self) -> EmbeddingTable {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
            }
        }
        out.normalized = true;
        out
    }

    pub fn ids_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".ids");
        path.with_file_name(name)
    }

    pub fn to_bytes(&self) -> (Vec<u8>, Vec<u8>) {
        let mut bin = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        bin.extend_from_slice(MAGIC);
        bin.extend_from_slice(&VERSION.to_le_bytes());
        bin.push(match self.target {
            Target::User => 0,
            Target::Item => 1,
        });
        bin.push(u8::from(self.normalized));
        bin.extend_from_slice(&[0, 0]);
        bin.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bin.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for x in &self.data {
            bin.extend_from_slice(&x.to_le_bytes());
        }
        let mut ids = String::with_capacity(self.ids.len() * 6);
        for id in &self.ids {
            ids.push_str(&id.to_string());
            ids.push('\n');
        }
        (bin, ids.into_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let (bin, ids) = self.to_bytes();
        crate::jsonl::write_atomic(path, &bin)?;
        crate::jsonl::write_atomic(&Self::ids_path(path), &ids)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        };
        let bin = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bin.len() < HEADER_LEN || &bin[..4] != MAGIC {
            return Err(bad("not an embedding table".into()));
        }
        let version = u32::from_le_bytes(bin[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let target = match bin[8] {
            0 => Target::User,
            1 => Target::Item,
            t => return Err(bad(format!("bad target tag {t}"))),
        };
        let normalized = bin[9] != 0;
        let dim = u32::from_le_bytes(bin[12..16].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bin[16..24].try_into().unwrap()) as usize;
        if dim == 0 || bin.len() != HEADER_LEN + dim * count * 4 {
            return Err(bad("payload length does not match header".into()));
        }
        let data: Vec<f32> = bin[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let ids_path = Self::ids_path(path);
        let ids_text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        let ids = ids_text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.trim().parse::<u32>().map_err(|_| Error::Parse {
                    path: ids_path.clone(),
                    line: i + 1,
                    message: format!("bad id {l:?}"),
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        if ids.len() != count {
            return Err(bad(format!("{} ids for {count} rows", ids.len())));
        }
        let mut table = EmbeddingTable::new(target, dim);
        table.normalized = normalized;
        for (id, row) in ids.iter().zip(data.chunks_exact(dim)) {
            table.push(*id, row)?;
        }
        Ok(table)
    }
}
