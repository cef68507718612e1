//! Append-only JSONL response cache keyed by backend, template and prompt.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    response: String,
}

#[derive(Debug)]
pub struct KbCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

pub fn cache_key(backend: &str, template: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in [backend, template, prompt] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

impl KbCache {
    pub fn in_memory() -> Self {
        KbCache { path: None, entries: Mutex::new(HashMap::new()) }
    }

    /// Opens (or creates on first write) a cache file. Unparseable lines are
    /// skipped with a warning.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.response);
                    }
                    Err(e) => log::warn!("{}:{}: skipping cache line: {e}", path.display(), n + 1),
                }
            }
        }
        Ok(KbCache { path: Some(path), entries: Mutex::new(entries) })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: &str, response: &str) -> Result<()> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
            let line = serde_json::to_string(&Entry { key: key.to_string(), response: response.to_string() })?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        entries.insert(key.to_string(), response.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        let k = cache_key("llm", "encode.v1", "hello");
        {
            let c = KbCache::open(&p).unwrap();
            assert!(c.get(&k).is_none());
            c.insert(&k, "hi").unwrap();
        }
        let c = KbCache::open(&p).unwrap();
        assert_eq!(c.get(&k).as_deref(), Some("hi"));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn key_separates_fields() {
        assert_ne!(cache_key("ab", "c", ""), cache_key("a", "bc", ""));
    }
}
