//! Append-only JSONL store of transcripts keyed by request hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache file {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cache file {} line {line}: {source}", path.display())]
    Corrupt { path: PathBuf, line: usize, source: serde_json::Error },
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub hash: String,
    pub response: String,
    pub backend: String,
    /// Seconds since the Unix epoch at recording time.
    pub timestamp: u64,
}

impl Transcript {
    pub fn now(hash: String, response: String, backend: String) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { hash, response, backend, timestamp }
    }
}

pub struct ResponseCache {
    entries: RwLock<HashMap<String, Transcript>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { entries: RwLock::new(HashMap::new()), file: None }
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let io_err = |source| CacheError::Io { path: path.to_path_buf(), source };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let t: Transcript = serde_json::from_str(&line)
                    .map_err(|source| CacheError::Corrupt { path: path.to_path_buf(), line: i + 1, source })?;
                entries.entry(t.hash.clone()).or_insert(t);
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(Self { entries: RwLock::new(entries), file: Some((path.to_path_buf(), Mutex::new(file))) })
    }

    pub fn get(&self, hash: &str) -> Option<Transcript> {
        self.entries.read().unwrap().get(hash).cloned()
    }

    /// Stores `t` unless the hash is already present; returns the stored entry.
    pub fn insert(&self, t: Transcript) -> Result<Transcript, CacheError> {
        let mut entries = self.entries.write().unwrap();
        if let Some(existing) = entries.get(&t.hash) {
            return Ok(existing.clone());
        }
        if let Some((path, file)) = &self.file {
            let mut line = serde_json::to_string(&t).expect("transcripts serialize");
            line.push('\n');
            let mut f = file.lock().unwrap();
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|source| CacheError::Io { path: path.clone(), source })?;
        }
        entries.insert(t.hash.clone(), t.clone());
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
