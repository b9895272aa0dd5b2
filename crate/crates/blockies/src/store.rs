//! Append-only session event logs.
//!
//! One JSON-lines file per session under `<data_dir>/sessions/`. Every append
//! is flushed to disk before the caller acknowledges the request. A torn final
//! line left by a crash was never acknowledged and is dropped on load.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockies_core::hash::sha256_hex;
use blockies_core::study::{SessionEvent, SessionState, StudyPlan};

/// Session id derived from a bearer token. The token itself is never stored.
pub fn session_id_for(token: &str) -> String {
    sha256_hex(token.as_bytes())[..32].to_string()
}

/// 128 random bits from the operating system, hex encoded.
pub fn new_token() -> Result<String> {
    let mut buf = [0u8; 16];
    getrandom::fill(&mut buf).map_err(|e| anyhow::anyhow!("OS randomness unavailable: {e}"))?;
    Ok(buf.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(data_dir: &Path) -> Result<Self> {
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    /// Appends one event and syncs it to disk.
    pub fn append(&self, session_id: &str, event: &SessionEvent) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        let path = self.path(session_id);
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    /// Creates the log of a new session. Fails if it already exists.
    pub fn create(&self, session_id: &str, event: &SessionEvent) -> Result<()> {
        let path = self.path(session_id);
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create_new(true).write(true).open(&path)?;
        f.write_all(&line)?;
        f.sync_all()?;
        File::open(&self.dir)?.sync_all()?;
        Ok(())
    }

    /// Reads a session's events, truncating an unterminated final line.
    pub fn read_events(&self, session_id: &str) -> Result<Vec<SessionEvent>> {
        read_event_log(&self.path(session_id), true)
    }

    pub fn session_ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".jsonl") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Replays every stored session against `plan`.
    pub fn load_all(&self, plan: &StudyPlan) -> Result<Vec<SessionState>> {
        self.session_ids()?
            .into_iter()
            .map(|id| {
                let events = self.read_events(&id)?;
                SessionState::replay(plan, &events).with_context(|| format!("replaying session {id}"))
            })
            .collect()
    }
}

/// Parses an event log. With `repair`, a torn last line is cut from the file.
pub fn read_event_log(path: &Path, repair: bool) -> Result<Vec<SessionEvent>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        if !repair {
            bail!("{} ends with an incomplete record", path.display());
        }
        tracing::warn!(path = %path.display(), "dropping torn final record");
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete as u64)?;
        f.sync_all()?;
    }
    let mut events = Vec::new();
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        events.push(serde_json::from_slice(line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use blockies_core::metrics::Phase;

    fn ev(i: usize) -> SessionEvent {
        SessionEvent::Presented { phase: Phase::Tutorial, index: i, sample_id: format!("{i:06}"), at_ms: i as u64 }
    }

    #[test]
    fn tokens_are_distinct_and_long() {
        let a = new_token().unwrap();
        let b = new_token().unwrap();
        assert_eq!(a.len(), 32);
        assert_ne!(a, b);
        assert_eq!(session_id_for(&a).len(), 32);
        assert_ne!(session_id_for(&a), a);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        store.create("s", &ev(0)).unwrap();
        store.append("s", &ev(1)).unwrap();
        assert!(store.create("s", &ev(0)).is_err());
        let mut f = OpenOptions::new().append(true).open(store.path("s")).unwrap();
        f.write_all(b"{\"event\":\"presen").unwrap();
        drop(f);
        assert!(read_event_log(&store.path("s"), false).is_err());
        assert_eq!(store.read_events("s").unwrap(), vec![ev(0), ev(1)]);
        store.append("s", &ev(2)).unwrap();
        assert_eq!(store.read_events("s").unwrap().len(), 3);
        assert_eq!(store.session_ids().unwrap(), vec!["s".to_string()]);
    }
}
