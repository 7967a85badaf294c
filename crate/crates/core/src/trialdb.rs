//! Append-only store for the experimental history.
//!
//! Records are JSON objects, one per line. Appends take a per-store mutex and
//! an exclusive file lock, so multiple worker threads (or processes) can share
//! one backing file; each append lands exactly once. Snapshots are immutable
//! copies sorted by `born_order` and never observe partial records.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::Value;

/// Outcome of a trial's loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Pending,
    Ok,
    Fail,
}

/// One evaluated (or in-flight) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: u64,
    pub born_order: u64,
    pub status: TrialStatus,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    /// Sampled hyperparameter values, keyed by label. Holds exactly the
    /// labels active under this configuration's choice selections.
    pub assignment: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, String>,
}

impl Trial {
    fn check_invariants(&self) -> Result<(), StoreError> {
        match self.status {
            TrialStatus::Ok => match self.loss {
                Some(l) if l.is_finite() => Ok(()),
                Some(l) => Err(StoreError::Invariant(format!(
                    "ok trial {} has non-finite loss {l}",
                    self.trial_id
                ))),
                None => Err(StoreError::Invariant(format!(
                    "ok trial {} has no loss",
                    self.trial_id
                ))),
            },
            _ => {
                if self.loss.is_some() {
                    Err(StoreError::Invariant(format!(
                        "{:?} trial {} must not carry a loss",
                        self.status, self.trial_id
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("corrupt record at line {line}: {source}")]
    Corrupt {
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate trial_id {0}")]
    DuplicateId(u64),
}

/// A claimed (trial_id, born_order) pair; lets workers derive per-trial seeds
/// before the evaluation finishes.
#[derive(Debug, Clone, Copy)]
pub struct Reservation {
    pub trial_id: u64,
    pub born_order: u64,
}

struct Inner {
    trials: Vec<Trial>, // kept sorted by born_order
    next: u64,
    file: Option<File>,
}

/// Append-only trial store, optionally backed by a JSON-lines file.
pub struct TrialStore {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
}

impl TrialStore {
    /// Volatile store with no backing file.
    pub fn in_memory() -> Self {
        TrialStore {
            inner: Mutex::new(Inner { trials: Vec::new(), next: 0, file: None }),
            path: None,
        }
    }

    /// Open (creating if absent) a file-backed store and load its history.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let trials = if path.exists() {
            read_records(&path)?
        } else {
            Vec::new()
        };
        let next = trials
            .iter()
            .map(|t| t.trial_id.max(t.born_order) + 1)
            .max()
            .unwrap_or(0);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut trials = trials;
        trials.sort_by_key(|t| t.born_order);
        Ok(TrialStore {
            inner: Mutex::new(Inner { trials, next, file: Some(file) }),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Claim the next (trial_id, born_order). Ids are handed out once, so
    /// concurrent workers never collide.
    pub fn reserve(&self) -> Reservation {
        let mut inner = self.inner.lock().unwrap();
        let n = inner.next;
        inner.next += 1;
        Reservation { trial_id: n, born_order: n }
    }

    /// Durably append one trial. The record is visible to all subsequent
    /// snapshots once this returns.
    pub fn append_trial(&self, trial: Trial) -> Result<u64, StoreError> {
        trial.check_invariants()?;
        let mut inner = self.inner.lock().unwrap();
        if inner.trials.iter().any(|t| t.trial_id == trial.trial_id) {
            return Err(StoreError::DuplicateId(trial.trial_id));
        }
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&trial).expect("trial serializes");
            line.push('\n');
            lock_exclusive(file)?;
            let res = file.write_all(line.as_bytes()).and_then(|_| file.flush());
            unlock(file);
            res?;
        }
        inner.next = inner.next.max(trial.trial_id.max(trial.born_order) + 1);
        let id = trial.trial_id;
        let pos = inner
            .trials
            .partition_point(|t| t.born_order <= trial.born_order);
        inner.trials.insert(pos, trial);
        Ok(id)
    }

    /// Immutable copy of the history, sorted by `born_order`. Later appends
    /// do not affect a snapshot already taken.
    pub fn snapshot(&self) -> Vec<Trial> {
        self.inner.lock().unwrap().trials.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trials with ok status.
    pub fn ok_count(&self) -> usize {
        self.inner
            .lock()
            .unwrap()
            .trials
            .iter()
            .filter(|t| t.status == TrialStatus::Ok)
            .count()
    }

    /// The ok trial with the smallest loss; ties go to the earliest
    /// `born_order`. `None` when no trial succeeded.
    pub fn best_trial(&self) -> Option<Trial> {
        best_of(&self.inner.lock().unwrap().trials)
    }
}

/// Best ok trial of an already-taken snapshot (same tie-break as the store).
pub fn best_of(trials: &[Trial]) -> Option<Trial> {
    trials
        .iter()
        .filter(|t| t.status == TrialStatus::Ok)
        .min_by(|a, b| {
            a.loss
                .partial_cmp(&b.loss)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.born_order.cmp(&b.born_order))
        })
        .cloned()
}

fn read_records(path: &Path) -> Result<Vec<Trial>, StoreError> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut trials = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        // a final record without its newline is an interrupted append; skip it
        if !buf.ends_with('\n') {
            break;
        }
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        let trial: Trial =
            serde_json::from_str(text).map_err(|source| StoreError::Corrupt { line: line_no, source })?;
        trials.push(trial);
    }
    Ok(trials)
}

#[cfg(unix)]
fn lock_exclusive(file: &File) -> std::io::Result<()> {
    use std::os::unix::io::AsRawFd;
    let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX) };
    if rc == 0 {
        Ok(())
    } else {
        Err(std::io::Error::last_os_error())
    }
}

#[cfg(unix)]
fn unlock(file: &File) {
    use std::os::unix::io::AsRawFd;
    unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_UN) };
}

#[cfg(not(unix))]
fn lock_exclusive(_file: &File) -> std::io::Result<()> {
    Ok(())
}

#[cfg(not(unix))]
fn unlock(_file: &File) {}
