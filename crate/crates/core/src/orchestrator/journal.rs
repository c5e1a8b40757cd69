//! Append-only JSONL journal keyed by post id, so interrupted batches
//! restart without re-billing completed work.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JournalStatus {
    /// Final output recorded.
    Ok,
    /// Attempt failed transiently; another follows.
    Retry,
    /// Provider refused; recorded, not retried.
    Refused,
    /// All retries spent.
    Exhausted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JournalEntry {
    pub id: String,
    /// 1-based attempt number for this post.
    pub attempt: usize,
    pub status: JournalStatus,
    pub output: Option<String>,
}

/// Single serialized sink for journal entries. Writes are line-buffered and
/// flushed per entry so a crash loses at most the in-flight line.
pub struct Journal {
    path: PathBuf,
    writer: Mutex<Option<File>>,
}

impl Journal {
    pub fn open(path: impl Into<PathBuf>) -> Journal {
        Journal { path: path.into(), writer: Mutex::new(None) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Ids with a final `ok` entry, mapped to their recorded output.
    pub fn load_completed(&self) -> Result<HashMap<String, String>, OrchestratorError> {
        let mut completed = HashMap::new();
        if !self.path.exists() {
            return Ok(completed);
        }
        let reader = BufReader::new(File::open(&self.path)?);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            // Tolerate a torn trailing line from a previous crash.
            let Ok(entry) = serde_json::from_str::<JournalEntry>(&line) else {
                continue;
            };
            if entry.status == JournalStatus::Ok {
                if let Some(output) = entry.output {
                    completed.insert(entry.id, output);
                }
            }
        }
        Ok(completed)
    }

    pub fn append(&self, entry: &JournalEntry) -> Result<(), OrchestratorError> {
        let mut guard = self.writer.lock().expect("journal lock poisoned");
        if guard.is_none() {
            let file = OpenOptions::new().create(true).append(true).open(&self.path)?;
            *guard = Some(file);
        }
        let file = guard.as_mut().expect("writer just initialized");
        let line = serde_json::to_string(entry).expect("journal entries serialize");
        writeln!(file, "{line}")?;
        file.flush()?;
        Ok(())
    }
}
