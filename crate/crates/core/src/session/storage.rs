//! Session persistence.
//!
//! [`DirStorage`] keeps one directory per session:
//!
//! ```text
//! <root>/<session-id>/meta.json
//! <root>/<session-id>/log.jsonl        one IterationRecord per line
//! <root>/<session-id>/journal.jsonl    one Action per line
//! <root>/<session-id>/exports/board-<iteration>-<n>.json
//! ```

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::export::BoardDocument;
use super::record::IterationRecord;
use super::Action;
use crate::config::Config;
use crate::feedback::AlgorithmKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub kind: AlgorithmKind,
    pub w1: String,
    pub w2: String,
    pub seed: u64,
    pub config: Config,
    pub created_at: DateTime<Utc>,
}

pub trait SessionStorage: Send {
    fn write_meta(&mut self, meta: &SessionMeta) -> io::Result<()>;
    fn append_record(&mut self, record: &IterationRecord) -> io::Result<()>;
    fn append_action(&mut self, action: &Action) -> io::Result<()>;
    fn write_export(&mut self, doc: &BoardDocument) -> io::Result<()>;
}

/// Discards everything; the session keeps its own in-memory copies.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullStorage;

impl SessionStorage for NullStorage {
    fn write_meta(&mut self, _: &SessionMeta) -> io::Result<()> {
        Ok(())
    }
    fn append_record(&mut self, _: &IterationRecord) -> io::Result<()> {
        Ok(())
    }
    fn append_action(&mut self, _: &Action) -> io::Result<()> {
        Ok(())
    }
    fn write_export(&mut self, _: &BoardDocument) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DirStorage {
    dir: PathBuf,
    exports: usize,
}

impl DirStorage {
    /// Storage for `session_id` under `root`, creating the directory.
    pub fn create(root: impl AsRef<Path>, session_id: &str) -> io::Result<Self> {
        if session_id.is_empty() || session_id.contains(['/', '\\']) || session_id.starts_with('.')
        {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("unusable session id {session_id:?}"),
            ));
        }
        let dir = root.as_ref().join(session_id);
        fs::create_dir_all(dir.join("exports"))?;
        Ok(Self { dir, exports: 0 })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("log.jsonl")
    }

    pub fn journal_path(&self) -> PathBuf {
        self.dir.join("journal.jsonl")
    }

    fn append_line<T: Serialize>(&self, file: &str, value: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(value).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(file))?;
        // A single write per record keeps appends whole.
        f.write_all(&line)?;
        f.flush()
    }
}

impl SessionStorage for DirStorage {
    fn write_meta(&mut self, meta: &SessionMeta) -> io::Result<()> {
        let text = serde_json::to_string_pretty(meta).map_err(io::Error::other)?;
        fs::write(self.dir.join("meta.json"), text)
    }

    fn append_record(&mut self, record: &IterationRecord) -> io::Result<()> {
        self.append_line("log.jsonl", record)
    }

    fn append_action(&mut self, action: &Action) -> io::Result<()> {
        self.append_line("journal.jsonl", action)
    }

    fn write_export(&mut self, doc: &BoardDocument) -> io::Result<()> {
        self.exports += 1;
        let name = format!("board-{:03}-{}.json", doc.iteration_id, self.exports);
        let text = serde_json::to_string_pretty(doc).map_err(io::Error::other)?;
        fs::write(self.dir.join("exports").join(name), text)
    }
}
