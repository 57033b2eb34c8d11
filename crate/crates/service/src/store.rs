//! Append-only event files, one `<session id>.jsonl` per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::record::{Event, ReplayError, SessionRecord};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Replay {
        path: String,
        #[source]
        source: ReplayError,
    },
    #[error("invalid session id {0:?}")]
    BadId(String),
}

#[derive(Debug, Clone)]
pub struct EventStore {
    dir: PathBuf,
}

impl EventStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.display().to_string(), source })?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: &str) -> Result<PathBuf, StoreError> {
        let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !ok {
            return Err(StoreError::BadId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.jsonl")))
    }

    /// Appends one event as a single line and flushes it to disk.
    pub fn append(&self, id: &str, event: &Event) -> Result<(), StoreError> {
        let path = self.path_for(id)?;
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let mut line = serde_json::to_string(event).expect("events serialise");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    pub fn events(&self, id: &str) -> Result<Vec<Event>, StoreError> {
        read_events(&self.path_for(id)?)
    }

    pub fn load(&self, id: &str) -> Result<SessionRecord, StoreError> {
        let path = self.path_for(id)?;
        let events = read_events(&path)?;
        SessionRecord::replay(&events).map_err(|source| StoreError::Replay { path: path.display().to_string(), source })
    }

    /// Ids of every stored session, sorted.
    pub fn ids(&self) -> Result<Vec<String>, StoreError> {
        let io = |source| StoreError::Io { path: self.dir.display().to_string(), source };
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Reads an event file. A final line without its newline is a write that
/// never completed and is skipped.
pub fn read_events(path: &Path) -> Result<Vec<Event>, StoreError> {
    let p = path.display().to_string();
    let f = File::open(path).map_err(|source| StoreError::Io { path: p.clone(), source })?;
    let mut reader = BufReader::new(f);
    let mut events = Vec::new();
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|source| StoreError::Io { path: p.clone(), source })?;
        if n == 0 || !buf.ends_with('\n') {
            break;
        }
        line += 1;
        if buf.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&buf).map_err(|e| StoreError::Parse {
            path: p.clone(),
            line,
            message: e.to_string(),
        })?;
        events.push(e);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_restricted_to_safe_file_names() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        assert!(store.path_for("abc-123_x").is_ok());
        for bad in ["", "../etc", "a/b", "a.b"] {
            assert!(matches!(store.path_for(bad), Err(StoreError::BadId(_))), "{bad}");
        }
    }

    #[test]
    fn torn_final_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        store.append("s", &Event::Ended { at_ms: 5 }).unwrap();
        let path = store.path_for("s").unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"ended\",\"at").unwrap();
        assert_eq!(store.events("s").unwrap(), vec![Event::Ended { at_ms: 5 }]);
        assert_eq!(store.ids().unwrap(), vec!["s".to_string()]);
    }
}
