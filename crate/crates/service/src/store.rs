//! One JSON file per session, replaced atomically on every change.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::Utc;

use crate::error::{Result, ServiceError};
use crate::session::{
    valid_session_id, Interpretations, PendingDraw, Session, SessionConfig, SessionFile, SessionReport,
};

/// Directory of session files. Changes to one session are serialized;
/// reads go straight to the file, which is only ever replaced whole.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if !valid_session_id(id) {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Persisted record, without replay.
    pub fn read(&self, id: &str) -> Result<SessionFile> {
        let path = self.path(id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt(e.to_string()))
    }

    /// Session rebuilt by replaying its draw log.
    pub fn load(&self, id: &str) -> Result<Session> {
        Session::from_file(self.read(id)?)
    }

    fn save(&self, file: &SessionFile) -> Result<()> {
        let path = self.path(&file.session_id)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, file)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| ServiceError::Io(e.error))?;
        Ok(())
    }

    pub fn create(&self, config: SessionConfig) -> Result<SessionReport> {
        let session = Session::create(config, Utc::now())?;
        let lock = self.lock(session.id());
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if self.path(session.id())?.exists() {
            return Err(ServiceError::AlreadyExists(session.id().to_string()));
        }
        self.save(session.file())?;
        Ok(session.report())
    }

    /// Runs `f` on the live session and persists any change it made, even
    /// when `f` fails (e.g. exhaustion also escalates the session).
    fn update<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut session = self.load(id)?;
        let before = session.file().clone();
        let out = f(&mut session);
        if *session.file() != before {
            self.save(session.file())?;
        }
        out
    }

    pub fn status(&self, id: &str) -> Result<SessionReport> {
        Ok(SessionReport::from_file(&self.read(id)?))
    }

    pub fn draw(&self, id: &str, count: u64) -> Result<Vec<PendingDraw>> {
        self.update(id, |s| s.draw(count))
    }

    pub fn record(&self, id: &str, batch: &Interpretations) -> Result<SessionReport> {
        self.update(id, |s| s.record(batch, Utc::now()))
    }

    pub fn escalate(&self, id: &str) -> Result<SessionReport> {
        self.update(id, |s| s.escalate())
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(id) = name.strip_suffix(".json") {
                if valid_session_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
