//! Append-only JSON-lines journal of queue events.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::ServiceError;
use crate::queue::Event;

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (creating if needed) the journal at `path` and returns it with
    /// the events already recorded. A final line cut short by a crash is
    /// discarded; any other unreadable line is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Event>), ServiceError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| ServiceError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let mut events = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(line).map_err(|e| ServiceError::Corrupt {
                line: i + 1,
                msg: e.to_string(),
            })?;
            events.push(event);
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        if complete < text.len() {
            file.set_len(complete as u64).map_err(io)?;
        }
        Ok((Self { path, file }, events))
    }

    /// Appends `event` and flushes it to disk.
    pub fn append(&mut self, event: &Event) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(event).expect("events serialise");
        line.push('\n');
        let io = |source| ServiceError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
