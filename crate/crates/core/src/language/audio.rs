//! Content-addressed audio artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LanguageError;
use crate::clock::Timestamp;

/// Hex SHA-256 of the audio bytes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AudioHandle(pub String);

impl AudioHandle {
    pub fn of(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }
}

pub const AUDIO_RETENTION_DAYS: i64 = 30;

pub trait AudioStore: Send + Sync {
    fn put(&self, bytes: &[u8], at: Timestamp) -> Result<AudioHandle, LanguageError>;
    fn get(&self, handle: &AudioHandle) -> Result<Vec<u8>, LanguageError>;
    /// Drop artifacts stored before `now - retention`; returns how many.
    fn purge_expired(&self, now: Timestamp) -> usize;
}

#[derive(Debug, Default)]
pub struct MemoryAudioStore {
    items: Mutex<BTreeMap<AudioHandle, (Vec<u8>, Timestamp)>>,
}

impl AudioStore for MemoryAudioStore {
    fn put(&self, bytes: &[u8], at: Timestamp) -> Result<AudioHandle, LanguageError> {
        let h = AudioHandle::of(bytes);
        self.items
            .lock()
            .expect("audio lock")
            .entry(h.clone())
            .or_insert_with(|| (bytes.to_vec(), at));
        Ok(h)
    }

    fn get(&self, handle: &AudioHandle) -> Result<Vec<u8>, LanguageError> {
        self.items
            .lock()
            .expect("audio lock")
            .get(handle)
            .map(|(b, _)| b.clone())
            .ok_or_else(|| LanguageError::Store(format!("no audio {}", handle.0)))
    }

    fn purge_expired(&self, now: Timestamp) -> usize {
        let cutoff = now - Duration::days(AUDIO_RETENTION_DAYS);
        let mut items = self.items.lock().expect("audio lock");
        let before = items.len();
        items.retain(|_, (_, at)| *at >= cutoff);
        before - items.len()
    }
}

/// Files named by their handle under one directory. Retention uses the
/// file modification time.
#[derive(Debug)]
pub struct FsAudioStore {
    dir: PathBuf,
}

impl FsAudioStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, LanguageError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LanguageError::Store(e.to_string()))?;
        Ok(Self { dir })
    }
}

impl AudioStore for FsAudioStore {
    fn put(&self, bytes: &[u8], _at: Timestamp) -> Result<AudioHandle, LanguageError> {
        let h = AudioHandle::of(bytes);
        let path = self.dir.join(&h.0);
        if !path.exists() {
            let tmp = self.dir.join(format!("{}.tmp", h.0));
            fs::write(&tmp, bytes).map_err(|e| LanguageError::Store(e.to_string()))?;
            fs::rename(&tmp, &path).map_err(|e| LanguageError::Store(e.to_string()))?;
        }
        Ok(h)
    }

    fn get(&self, handle: &AudioHandle) -> Result<Vec<u8>, LanguageError> {
        if !handle.0.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(LanguageError::Store("malformed handle".into()));
        }
        fs::read(self.dir.join(&handle.0)).map_err(|e| LanguageError::Store(e.to_string()))
    }

    fn purge_expired(&self, now: Timestamp) -> usize {
        let cutoff: std::time::SystemTime = (now - Duration::days(AUDIO_RETENTION_DAYS)).into();
        let Ok(entries) = fs::read_dir(&self.dir) else {
            return 0;
        };
        entries
            .filter_map(Result::ok)
            .filter(|e| {
                e.metadata()
                    .and_then(|m| m.modified())
                    .is_ok_and(|m| m < cutoff)
            })
            .filter(|e| fs::remove_file(e.path()).is_ok())
            .count()
    }
}
