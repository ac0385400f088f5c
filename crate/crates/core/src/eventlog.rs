//! Append-only event log.
//!
//! Each record is one line: the byte length and CRC-32 of the JSON body as
//! eight hex digits each, then the body.
//!
//! ```text
//! 0000005b 1c291ca3 {"offset":0,"at":"2024-03-04T03:30:00Z","kind":"Started",...}
//! ```
//!
//! A torn or altered record fails its length or checksum test and the log
//! refuses to load.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::clock::Timestamp;
use crate::events::{Event, EventRecord};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("corrupt log at record {record}: {reason}")]
    CorruptLog { record: u64, reason: String },
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("event not serializable: {0}")]
    Encode(#[from] serde_json::Error),
}

pub trait EventLog: Send {
    /// Durably append a batch, all or nothing. The records must carry the
    /// offsets that follow the current end of the log.
    fn append_batch(&mut self, records: &[EventRecord]) -> Result<(), LogError>;
    fn read_all(&self) -> Result<Vec<EventRecord>, LogError>;
    fn next_offset(&self) -> u64;

    /// Append one event and return its offset.
    fn append(&mut self, at: Timestamp, event: &Event) -> Result<u64, LogError> {
        let offset = self.next_offset();
        self.append_batch(&[EventRecord {
            offset,
            at,
            event: event.clone(),
        }])?;
        Ok(offset)
    }
}

fn encode_batch(records: &[EventRecord], next: u64) -> Result<String, LogError> {
    let mut text = String::new();
    for (i, r) in records.iter().enumerate() {
        if r.offset != next + i as u64 {
            return Err(LogError::CorruptLog {
                record: r.offset,
                reason: format!("append out of sequence, expected offset {}", next + i as u64),
            });
        }
        text.push_str(&encode_record(r)?);
    }
    Ok(text)
}

pub fn encode_record(record: &EventRecord) -> Result<String, LogError> {
    let body = serde_json::to_string(record)?;
    let crc = crc32fast::hash(body.as_bytes());
    Ok(format!("{:08x} {:08x} {}\n", body.len(), crc, body))
}

pub fn decode_record(line: &str, expected_offset: u64) -> Result<EventRecord, LogError> {
    let corrupt = |reason: String| LogError::CorruptLog {
        record: expected_offset,
        reason,
    };
    let line = line
        .strip_suffix('\n')
        .ok_or_else(|| corrupt("truncated record".into()))?;
    if line.len() < 18 || line.as_bytes()[8] != b' ' || line.as_bytes()[17] != b' ' {
        return Err(corrupt("malformed record header".into()));
    }
    let len = usize::from_str_radix(&line[..8], 16).map_err(|_| corrupt("bad length".into()))?;
    let crc = u32::from_str_radix(&line[9..17], 16).map_err(|_| corrupt("bad checksum field".into()))?;
    let body = &line[18..];
    if body.len() != len {
        return Err(corrupt(format!("length {} does not match header {len}", body.len())));
    }
    if crc32fast::hash(body.as_bytes()) != crc {
        return Err(corrupt("checksum mismatch".into()));
    }
    let record: EventRecord = serde_json::from_str(body).map_err(|e| corrupt(e.to_string()))?;
    if record.offset != expected_offset {
        return Err(corrupt(format!("offset {} out of sequence", record.offset)));
    }
    Ok(record)
}

fn decode_all(text: &str) -> Result<Vec<EventRecord>, LogError> {
    text.split_inclusive('\n')
        .enumerate()
        .map(|(i, line)| decode_record(line, i as u64))
        .collect()
}

/// Log file on disk. Appends are flushed and, unless disabled, synced.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    file: File,
    next: u64,
    sync: bool,
}

impl FileLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).read(true).open(&path)?;
        let mut log = Self {
            path,
            file,
            next: 0,
            sync: true,
        };
        log.next = log.read_all()?.len() as u64;
        Ok(log)
    }

    /// Skip fsync after each append; for tests and simulations.
    pub fn without_sync(mut self) -> Self {
        self.sync = false;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventLog for FileLog {
    fn append_batch(&mut self, records: &[EventRecord]) -> Result<(), LogError> {
        let text = encode_batch(records, self.next)?;
        self.file.write_all(text.as_bytes())?;
        self.file.flush()?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.next += records.len() as u64;
        Ok(())
    }

    fn read_all(&self) -> Result<Vec<EventRecord>, LogError> {
        let mut reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::new();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Ok(out);
            }
            out.push(decode_record(&line, out.len() as u64)?);
        }
    }

    fn next_offset(&self) -> u64 {
        self.next
    }
}

/// In-memory log holding the encoded lines. Clones share the buffer, so a
/// test can drop a service and reopen the same log.
#[derive(Clone, Debug, Default)]
pub struct MemoryLog {
    lines: Arc<Mutex<Lines>>,
}

#[derive(Debug, Default)]
struct Lines {
    text: String,
    count: u64,
}

impl Lines {
    fn new(text: String) -> Self {
        let count = text.matches('\n').count() as u64;
        Self { text, count }
    }
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_text(text: impl Into<String>) -> Result<Self, LogError> {
        let text = text.into();
        decode_all(&text)?;
        Ok(Self {
            lines: Arc::new(Mutex::new(Lines::new(text))),
        })
    }

    pub fn text(&self) -> String {
        self.lines.lock().expect("log lock").text.clone()
    }

    /// An independent copy of the first `n` records.
    pub fn prefix(&self, n: usize) -> MemoryLog {
        let text = self.text();
        let cut: String = text.split_inclusive('\n').take(n).collect();
        MemoryLog {
            lines: Arc::new(Mutex::new(Lines::new(cut))),
        }
    }
}

impl EventLog for MemoryLog {
    fn append_batch(&mut self, records: &[EventRecord]) -> Result<(), LogError> {
        let mut lines = self.lines.lock().expect("log lock");
        let text = encode_batch(records, lines.count)?;
        lines.text.push_str(&text);
        lines.count += records.len() as u64;
        Ok(())
    }

    fn read_all(&self) -> Result<Vec<EventRecord>, LogError> {
        decode_all(&self.lines.lock().expect("log lock").text)
    }

    fn next_offset(&self) -> u64 {
        self.lines.lock().expect("log lock").count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::LocalZone;
    use chrono::{TimeZone, Utc};

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2024, 3, 4, 3, 30, 0).unwrap()
    }

    fn started() -> Event {
        Event::Started {
            zone: LocalZone::parse("+05:30").unwrap(),
        }
    }

    #[test]
    fn offsets_start_at_zero_and_are_dense() {
        let mut log = MemoryLog::new();
        assert_eq!(log.append(t0(), &started()).unwrap(), 0);
        assert_eq!(log.append(t0(), &started()).unwrap(), 1);
        let all = log.read_all().unwrap();
        assert_eq!(all.iter().map(|r| r.offset).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn file_log_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        {
            let mut log = FileLog::open(&path).unwrap();
            log.append(t0(), &started()).unwrap();
        }
        let mut log = FileLog::open(&path).unwrap();
        assert_eq!(log.next_offset(), 1);
        assert_eq!(log.append(t0(), &started()).unwrap(), 1);
        assert_eq!(log.read_all().unwrap().len(), 2);
    }

    #[test]
    fn truncated_record_is_corrupt() {
        let mut log = MemoryLog::new();
        log.append(t0(), &started()).unwrap();
        log.append(t0(), &started()).unwrap();
        let text = log.text();
        let torn = &text[..text.len() - 5];
        assert!(matches!(
            MemoryLog::from_text(torn),
            Err(LogError::CorruptLog { record: 1, .. })
        ));
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut log = MemoryLog::new();
        log.append(t0(), &started()).unwrap();
        let text = log.text().replace("+05:30", "+05:31");
        assert!(matches!(MemoryLog::from_text(text), Err(LogError::CorruptLog { .. })));
    }

    #[test]
    fn header_format() {
        let mut log = MemoryLog::new();
        log.append(t0(), &started()).unwrap();
        let text = log.text();
        let body = &text[18..text.len() - 1];
        assert_eq!(&text[..8], format!("{:08x}", body.len()));
        assert!(body.starts_with(r#"{"offset":0,"at":"2024-03-04T03:30:00Z","kind":"Started""#));
    }

    #[test]
    fn batch_is_all_or_nothing() {
        let mut log = MemoryLog::new();
        let rec = |offset| EventRecord {
            offset,
            at: t0(),
            event: started(),
        };
        assert!(log.append_batch(&[rec(0), rec(2)]).is_err());
        assert_eq!(log.next_offset(), 0);
        log.append_batch(&[rec(0), rec(1)]).unwrap();
        assert_eq!(log.read_all().unwrap().len(), 2);
    }
}
