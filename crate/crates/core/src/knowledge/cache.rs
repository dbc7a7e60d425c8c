use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProviderTag;
use crate::{Result, Target};

pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub target: Target,
    pub subject_id: u32,
    pub prompt_hash: String,
    pub text: String,
    pub provider_tag: ProviderTag,
}

/// JSON-lines store of model responses keyed by prompt hash.
#[derive(Debug, Default)]
pub struct KnowledgeCache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
}

impl KnowledgeCache {
    pub fn in_memory() -> Self {
        KnowledgeCache::default()
    }

    /// Opens (or lazily creates) the cache file. Later lines win on duplicate hashes.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for e in crate::jsonl::read::<CacheEntry>(path)? {
                entries.insert(e.prompt_hash.clone(), e);
            }
        }
        Ok(KnowledgeCache {
            path: Some(path.to_path_buf()),
            entries,
        })
    }

    pub fn get(&self, hash: &str) -> Option<&CacheEntry> {
        self.entries.get(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rewrites the file with one line per hash in hash order, so concurrent appends leave no
    /// trace in its bytes.
    pub fn compact(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut rows: Vec<&CacheEntry> = self.entries.values().collect();
        rows.sort_by(|a, b| a.prompt_hash.cmp(&b.prompt_hash));
        crate::jsonl::write(path, rows)
    }

    pub fn insert(&mut self, entry: CacheEntry) -> Result<()> {
        if let Some(path) = &self.path {
            crate::jsonl::append(path, &entry)?;
        }
        self.entries.insert(entry.prompt_hash.clone(), entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u32) -> CacheEntry {
        let text = format!("prompt {id}");
        CacheEntry {
            target: Target::Item,
            subject_id: id,
            prompt_hash: prompt_hash(&text),
            text,
            provider_tag: ProviderTag::Llm,
        }
    }

    #[test]
    fn reopen_sees_appended_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let mut c = KnowledgeCache::open(&path).unwrap();
        c.insert(entry(1)).unwrap();
        c.insert(entry(2)).unwrap();
        let again = KnowledgeCache::open(&path).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(again.get(&entry(2).prompt_hash), Some(&entry(2)));
    }

    #[test]
    fn compaction_is_independent_of_insertion_order() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, order: &[u32]| {
            let path = dir.path().join(name);
            let mut c = KnowledgeCache::open(&path).unwrap();
            for &id in order {
                c.insert(entry(id)).unwrap();
            }
            c.insert(entry(order[0])).unwrap();
            c.compact().unwrap();
            std::fs::read(path).unwrap()
        };
        let a = write("a.jsonl", &[1, 2, 3, 4]);
        let b = write("b.jsonl", &[4, 2, 1, 3]);
        assert_eq!(a, b);
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
    }
}
