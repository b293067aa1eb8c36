//! Durable token store: an append-only log with an in-memory index.
//!
//! Each entry is `[u32 len][TokenRecord encoding]`. On open the log is
//! replayed; an incomplete final entry (a crash mid-append) is cut off.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use puppy_core::asset::TokenRecord;
use puppy_core::crypto::AssetId;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("id {0} is already registered")]
    Duplicate(AssetId),
    #[error("storage failure: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt token log at offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
}

pub struct TokenStore {
    path: PathBuf,
    index: RwLock<HashMap<AssetId, TokenRecord>>,
    log: Mutex<File>,
}

impl TokenStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (index, good) = replay(&bytes)?;
        if good < bytes.len() as u64 {
            tracing::warn!(dropped = bytes.len() as u64 - good, "discarding incomplete tail of token log");
            file.set_len(good)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path: path.to_path_buf(),
            index: RwLock::new(index),
            log: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, id: &AssetId) -> Option<TokenRecord> {
        self.index.read().unwrap().get(id).cloned()
    }

    pub fn contains(&self, id: &AssetId) -> bool {
        self.index.read().unwrap().contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends and syncs the record before it becomes visible.
    pub fn insert(&self, record: TokenRecord) -> Result<(), StoreError> {
        let mut log = self.log.lock().unwrap();
        if self.contains(&record.id) {
            return Err(StoreError::Duplicate(record.id));
        }
        let body = record.encode();
        let mut entry = Vec::with_capacity(4 + body.len());
        entry.extend_from_slice(&(body.len() as u32).to_be_bytes());
        entry.extend_from_slice(&body);
        log.write_all(&entry)?;
        log.sync_data()?;
        self.index.write().unwrap().insert(record.id, record);
        Ok(())
    }
}

/// Parses complete entries; returns the index and the length of the valid prefix.
fn replay(bytes: &[u8]) -> Result<(HashMap<AssetId, TokenRecord>, u64), StoreError> {
    let mut index = HashMap::new();
    let mut pos = 0usize;
    while bytes.len() - pos >= 4 {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let Some(body) = bytes.get(pos + 4..pos + 4 + len) else {
            break;
        };
        let record = TokenRecord::decode(body).map_err(|e| StoreError::Corrupt {
            offset: pos as u64,
            reason: e.to_string(),
        })?;
        index.insert(record.id, record);
        pos += 4 + len;
    }
    Ok((index, pos as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use puppy_core::asset::Scheme;

    fn record(n: u8) -> TokenRecord {
        TokenRecord {
            id: AssetId([n; 32]),
            scheme: Scheme::FreqyWm,
            share: vec![n; 20],
            c_sec: n.is_multiple_of(2).then(|| vec![n; 50]),
        }
    }

    #[test]
    fn insert_get_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/tokens.log");
        {
            let s = TokenStore::open(&path).unwrap();
            for n in 1..=5 {
                s.insert(record(n)).unwrap();
            }
            assert!(matches!(s.insert(record(3)), Err(StoreError::Duplicate(_))));
        }
        let s = TokenStore::open(&path).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.get(&AssetId([4; 32])), Some(record(4)));
        assert_eq!(s.get(&AssetId([9; 32])), None);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.log");
        {
            let s = TokenStore::open(&path).unwrap();
            s.insert(record(1)).unwrap();
            s.insert(record(2)).unwrap();
        }
        let full = std::fs::metadata(&path).unwrap().len();
        let f = OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(full - 7).unwrap();
        drop(f);
        let s = TokenStore::open(&path).unwrap();
        assert_eq!(s.len(), 1);
        s.insert(record(2)).unwrap();
        drop(s);
        assert_eq!(TokenStore::open(&path).unwrap().len(), 2);
    }

    #[test]
    fn garbage_entry_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.log");
        std::fs::write(&path, [0, 0, 0, 3, 1, 2, 3]).unwrap();
        assert!(matches!(TokenStore::open(&path), Err(StoreError::Corrupt { offset: 0, .. })));
    }
}
