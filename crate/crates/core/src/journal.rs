//! Append-only JSON Lines record of stage outcomes for one run.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Started,
    Done,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub stage: String,
    pub status: Status,
    /// Hex SHA-256 over the stage's inputs.
    pub input_hash: String,
    /// Paths relative to the run directory.
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Seconds since the Unix epoch.
    pub time: u64,
}

#[derive(Debug, Clone)]
pub struct Journal {
    path: PathBuf,
}

impl Journal {
    pub fn open(run_dir: &Path) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        Ok(Self {
            path: run_dir.join("journal.jsonl"),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(
        &self,
        stage: &str,
        status: Status,
        input_hash: &str,
        artifacts: Vec<PathBuf>,
        message: Option<String>,
    ) -> Result<Entry> {
        let entry = Entry {
            stage: stage.to_string(),
            status,
            input_hash: input_hash.to_string(),
            artifacts,
            message,
            time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        Ok(entry)
    }

    pub fn entries(&self) -> Result<Vec<Entry>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }

    /// Last completed (`done`) entry per stage, later runs overriding earlier
    /// ones; a later failure clears the stage.
    pub fn replay(&self) -> Result<BTreeMap<String, Entry>> {
        let mut state = BTreeMap::new();
        for entry in self.entries()? {
            match entry.status {
                Status::Done => {
                    state.insert(entry.stage.clone(), entry);
                }
                Status::Failed => {
                    state.remove(&entry.stage);
                }
                Status::Started | Status::Skipped => {}
            }
        }
        Ok(state)
    }

    /// Artifacts that the journal says exist, relative to the run directory.
    pub fn artifacts(&self) -> Result<Vec<PathBuf>> {
        let mut all: Vec<PathBuf> = self.replay()?.into_values().flat_map(|e| e.artifacts).collect();
        all.sort();
        all.dedup();
        Ok(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_tracks_last_outcome() {
        let dir = tempfile::tempdir().unwrap();
        let j = Journal::open(dir.path()).unwrap();
        j.append("scan", Status::Started, "h1", vec![], None).unwrap();
        j.append("scan", Status::Done, "h1", vec!["a".into()], None).unwrap();
        j.append("split", Status::Done, "h2", vec!["m".into()], None).unwrap();
        j.append("split", Status::Failed, "h3", vec![], Some("boom".into())).unwrap();
        let state = j.replay().unwrap();
        assert_eq!(state.keys().collect::<Vec<_>>(), vec!["scan"]);
        assert_eq!(j.artifacts().unwrap(), vec![PathBuf::from("a")]);
        assert_eq!(j.entries().unwrap().len(), 4);
    }

    #[test]
    fn missing_journal_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let j = Journal::open(&dir.path().join("run")).unwrap();
        assert!(j.replay().unwrap().is_empty());
    }
}
