//! Append-only event log with snapshot compaction.
//!
//! `events.ndjson` holds one `{seq, event}` object per line. An append is
//! acknowledged only after the line has been written and synced. On open, a
//! final line without its newline (a write torn by a crash) is cut off; any
//! other unparsable line is corruption and fails the open. Compaction writes
//! `snapshot.json` atomically and then truncates the log.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use cxr_core::pipeline::{FeedbackEvent, StudyRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blob::sync_dir;

pub const LOG_FILE: &str = "events.ndjson";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("event log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// Upload stored under `blob`; the study id is that digest.
    StudySubmitted {
        study_id: String,
        received_at: DateTime<Utc>,
    },
    /// Pipeline finished. `record.prediction_set_ref` names the prediction
    /// blob, if any.
    StudyProcessed { record: StudyRecord },
    Feedback(FeedbackEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    pub event: Event,
}

/// Parses log text. Returns the lines and the byte length of the valid
/// prefix; a torn final line is excluded from both.
pub fn parse_log(text: &str) -> Result<(Vec<LogLine>, usize), JournalError> {
    let mut out = Vec::new();
    let mut valid = 0;
    let mut offset = 0;
    for (i, chunk) in text.split_inclusive('\n').enumerate() {
        offset += chunk.len();
        let terminated = chunk.ends_with('\n');
        let line = chunk.trim();
        if line.is_empty() {
            if terminated {
                valid = offset;
            }
            continue;
        }
        match serde_json::from_str::<LogLine>(line) {
            Ok(l) if terminated => {
                out.push(l);
                valid = offset;
            }
            // A complete-looking object without its newline may still be a
            // torn write; only newline-terminated lines count as acked.
            Ok(_) => break,
            Err(_) if !terminated => break,
            Err(e) => {
                return Err(JournalError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok((out, valid))
}

pub struct Journal {
    dir: PathBuf,
    file: File,
    next_seq: u64,
    since_snapshot: u64,
}

/// What was on disk at open time.
pub struct Recovered<S> {
    pub snapshot: Option<S>,
    pub events: Vec<LogLine>,
}

impl Journal {
    /// Opens or creates the log in `dir`, repairing a torn tail. `last_seq`
    /// extracts the sequence number a snapshot covers.
    pub fn open<S: DeserializeOwned>(
        dir: &Path,
        last_seq: impl Fn(&S) -> u64,
    ) -> Result<(Self, Recovered<S>), JournalError> {
        fs::create_dir_all(dir)?;
        let snapshot: Option<S> = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|e| JournalError::Snapshot(e.to_string()))?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let floor = snapshot.as_ref().map_or(0, &last_seq);
        let path = dir.join(LOG_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let text = String::from_utf8_lossy(&bytes);
        let (lines, valid) = parse_log(&text)?;
        let file = OpenOptions::new().create(true).append(true).read(true).open(&path)?;
        if (valid as u64) < bytes.len() as u64 {
            tracing::warn!(dropped = bytes.len() - valid, "truncating torn tail of event log");
            file.set_len(valid as u64)?;
            file.sync_all()?;
        }
        // Lines at or below the snapshot's sequence survive a crash between
        // snapshot rename and log truncation; they are already folded in.
        let events: Vec<LogLine> = lines.into_iter().filter(|l| l.seq > floor).collect();
        let next_seq = events.iter().map(|l| l.seq).max().unwrap_or(floor).max(floor) + 1;
        let journal = Journal {
            dir: dir.to_path_buf(),
            file,
            next_seq,
            since_snapshot: events.len() as u64,
        };
        Ok((journal, Recovered { snapshot, events }))
    }

    /// Appends and syncs one event; returns its sequence number. The event
    /// is durable once this returns.
    pub fn append(&mut self, event: &Event) -> Result<u64, JournalError> {
        let seq = self.next_seq;
        let mut line = serde_json::to_vec(&LogLine {
            seq,
            event: event.clone(),
        })
        .expect("events serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.next_seq += 1;
        self.since_snapshot += 1;
        Ok(seq)
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Events appended since the last compaction.
    pub fn pending(&self) -> u64 {
        self.since_snapshot
    }

    /// Writes `snapshot` (which must cover every appended event) and empties
    /// the log.
    pub fn compact<S: Serialize>(&mut self, snapshot: &S) -> Result<(), JournalError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, snapshot).map_err(|e| JournalError::Snapshot(e.to_string()))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        sync_dir(&self.dir)?;
        self.file.set_len(0)?;
        self.file.sync_all()?;
        self.since_snapshot = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cxr_core::pipeline::{FindingRef, Verdict};

    fn feedback(id: &str) -> Event {
        Event::Feedback(FeedbackEvent {
            event_id: id.into(),
            study_id: "s".into(),
            finding: FindingRef::Classification,
            verdict: Verdict::Accepted,
            reviewer_id: "r".into(),
            timestamp: DateTime::from_timestamp(0, 0).unwrap(),
        })
    }

    #[derive(Serialize, Deserialize)]
    struct Snap {
        last_seq: u64,
    }

    fn open(dir: &Path) -> (Journal, Recovered<Snap>) {
        Journal::open(dir, |s: &Snap| s.last_seq).unwrap()
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, rec) = open(dir.path());
        assert!(rec.events.is_empty() && rec.snapshot.is_none());
        assert_eq!(j.append(&feedback("a")).unwrap(), 1);
        assert_eq!(j.append(&feedback("b")).unwrap(), 2);
        drop(j);
        let (j, rec) = open(dir.path());
        assert_eq!(rec.events.len(), 2);
        assert_eq!(rec.events[1].event, feedback("b"));
        assert_eq!(j.last_seq(), 2);
    }

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, _) = open(dir.path());
        j.append(&feedback("a")).unwrap();
        drop(j);
        let path = dir.path().join(LOG_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        let good = text.len();
        text.push_str("{\"seq\":2,\"event\":{\"type\":\"feed");
        fs::write(&path, &text).unwrap();
        let (mut j, rec) = open(dir.path());
        assert_eq!(rec.events.len(), 1);
        assert_eq!(fs::metadata(&path).unwrap().len(), good as u64);
        assert_eq!(j.append(&feedback("c")).unwrap(), 2);
    }

    #[test]
    fn unterminated_but_parsable_tail_is_not_acked() {
        let line = serde_json::to_string(&LogLine {
            seq: 1,
            event: feedback("a"),
        })
        .unwrap();
        let (lines, valid) = parse_log(&line).unwrap();
        assert!(lines.is_empty());
        assert_eq!(valid, 0);
    }

    #[test]
    fn corruption_in_the_middle_is_an_error() {
        let good = serde_json::to_string(&LogLine {
            seq: 2,
            event: feedback("a"),
        })
        .unwrap();
        let err = parse_log(&format!("garbage\n{good}\n")).unwrap_err();
        assert!(matches!(err, JournalError::Corrupt { line: 1, .. }));
    }

    #[test]
    fn compaction_keeps_sequence_and_filters_covered_lines() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, _) = open(dir.path());
        j.append(&feedback("a")).unwrap();
        j.append(&feedback("b")).unwrap();
        j.compact(&Snap { last_seq: 2 }).unwrap();
        assert_eq!(j.pending(), 0);
        j.append(&feedback("c")).unwrap();
        drop(j);
        let (j, rec) = open(dir.path());
        assert_eq!(rec.snapshot.unwrap().last_seq, 2);
        assert_eq!(rec.events.len(), 1);
        assert_eq!(rec.events[0].seq, 3);
        assert_eq!(j.last_seq(), 3);

        // Crash between snapshot rename and truncation: stale lines remain.
        let stale = serde_json::to_string(&LogLine {
            seq: 1,
            event: feedback("a"),
        })
        .unwrap();
        fs::write(dir.path().join(LOG_FILE), format!("{stale}\n")).unwrap();
        let (_, rec) = open(dir.path());
        assert!(rec.events.is_empty());
    }
}
