//! Append-only JSONL event log. Every event is flushed and fsynced before
//! the caller acknowledges it; replay tolerates a torn final line.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::study::StudyRecord;
use divbench_core::RatingRecord;

pub const LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: corrupt event: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    StudyCreated { study: StudyRecord },
    Rating { record: RatingRecord },
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

/// Events read back from disk plus how many lines were discarded.
pub struct Replay {
    pub events: Vec<Event>,
    pub torn_tail: bool,
}

impl EventLog {
    /// Reads every intact event under `dir`, creating the directory and log
    /// if missing. A final line without a trailing newline that does not
    /// parse is treated as an interrupted write and dropped.
    pub fn replay(dir: &Path) -> Result<Replay, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOG_FILE);
        if !path.exists() {
            return Ok(Replay {
                events: Vec::new(),
                torn_tail: false,
            });
        }
        let file = File::open(&path).map_err(io_err(&path))?;
        let mut reader = BufReader::new(file);
        let mut events = Vec::new();
        let mut torn_tail = false;
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(io_err(&path))?;
            if read == 0 {
                break;
            }
            n += 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Event>(line.trim_end()) {
                Ok(e) => events.push(e),
                Err(_) if !line.ends_with('\n') => torn_tail = true,
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        path: path.display().to_string(),
                        line: n,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(Replay { events, torn_tail })
    }

    /// Rewrites the log to exactly `events` (atomically, via rename) and
    /// opens it for appending.
    pub fn rewrite(dir: &Path, events: &[Event]) -> Result<Self, StoreError> {
        let path = dir.join(LOG_FILE);
        let tmp = dir.join(format!("{LOG_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut buf = Vec::new();
            for e in events {
                serde_json::to_writer(&mut buf, e).expect("events serialize");
                buf.push(b'\n');
            }
            f.write_all(&buf).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Self::open_append(&path)
    }

    fn open_append(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Appends one event and fsyncs it.
    pub fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
