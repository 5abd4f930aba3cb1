//! Session bookkeeping independent of the HTTP layer.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use proactiva_core::dialogue::{DialogueHistory, Transcript, Turn};
use proactiva_core::level::{InvalidLevel, StrategySpec};
use proactiva_core::react::{Engine, Input, ReactError};
use proactiva_core::ProactivityLevel;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    InvalidLevel(#[from] InvalidLevel),
    #[error("{0}")]
    BadRequest(String),
    #[error("no session {0:?}")]
    SessionNotFound(String),
    #[error("session {0:?} is closed")]
    SessionClosed(String),
    #[error("session {0:?} is still answering the previous message")]
    Busy(String),
    #[error(transparent)]
    Engine(#[from] ReactError),
    #[error("cannot write transcript: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Active,
    Closed,
}

/// What `GET /api/sessions/{id}` returns and the UI exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub level: ProactivityLevel,
    pub status: SessionStatus,
    pub created_at: DateTime<Utc>,
    pub history: DialogueHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub level: ProactivityLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opening_turn: Option<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posted {
    pub assistant_text: String,
    /// Indices of the committed driver and assistant turns.
    pub turn_indices: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedSession {
    pub transcript_path: String,
}

struct Slot {
    busy: AtomicBool,
    view: RwLock<SessionView>,
    transcript: RwLock<Option<PathBuf>>,
}

/// Clears the busy flag when dropped, including on early return or panic.
struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Slot {
    fn claim(&self, id: &str) -> Result<BusyGuard<'_>, ServiceError> {
        self.busy
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .map(|_| BusyGuard(&self.busy))
            .map_err(|_| ServiceError::Busy(id.to_string()))
    }

    fn snapshot(&self) -> SessionView {
        self.view.read().expect("session lock poisoned").clone()
    }
}

/// All live sessions plus the directory closed transcripts are written to.
pub struct SessionStore {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    root: PathBuf,
}

impl SessionStore {
    pub fn new(engine: Arc<Engine>, root: impl Into<PathBuf>) -> Self {
        Self {
            engine,
            sessions: RwLock::new(HashMap::new()),
            root: root.into(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn levels(&self) -> Vec<StrategySpec> {
        self.engine.catalog().specs().cloned().collect()
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    /// Opens a session. A scenario lets a level 4 or 5 assistant speak first.
    pub fn create(&self, level: i64, scenario: Option<&str>) -> Result<Created, ServiceError> {
        let level = ProactivityLevel::new(level)?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let mut history = DialogueHistory::new(session_id.clone());
        let mut opening_turn = None;
        if let Some(scenario) = scenario.map(str::trim).filter(|s| !s.is_empty()) {
            if !level.assistant_initiates() {
                return Err(ServiceError::BadRequest(format!(
                    "level {level} sessions start with the driver; scenarios apply to levels 4 and 5"
                )));
            }
            let response = self
                .engine
                .respond(level, &history, &Input::Initiation(scenario.to_string()))?;
            history = response.history;
            opening_turn = history.turns.last().cloned();
        }
        let view = SessionView {
            session_id: session_id.clone(),
            level,
            status: SessionStatus::Active,
            created_at: Utc::now(),
            history,
        };
        let slot = Slot {
            busy: AtomicBool::new(false),
            view: RwLock::new(view),
            transcript: RwLock::new(None),
        };
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session_id.clone(), Arc::new(slot));
        tracing::info!(%session_id, %level, "session created");
        Ok(Created {
            session_id,
            level,
            opening_turn,
        })
    }

    /// Runs one exchange. Only one call per session may be in flight; a
    /// concurrent call gets [`ServiceError::Busy`] instead of queuing.
    pub fn post_message(&self, id: &str, text: &str) -> Result<Posted, ServiceError> {
        let slot = self.slot(id)?;
        let _guard = slot.claim(id)?;
        let view = slot.snapshot();
        if view.status == SessionStatus::Closed {
            return Err(ServiceError::SessionClosed(id.to_string()));
        }
        if text.trim().is_empty() {
            return Err(ServiceError::BadRequest("message text is empty".into()));
        }
        let response = self
            .engine
            .respond(view.level, &view.history, &Input::Utterance(text.to_string()))?;
        let n = response.history.len();
        slot.view.write().expect("session lock poisoned").history = response.history;
        Ok(Posted {
            assistant_text: response.assistant_text,
            turn_indices: [n - 2, n - 1],
        })
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.slot(id)?.snapshot())
    }

    /// Marks the session closed and writes its transcript once. Closing again
    /// returns the same path.
    pub fn close(&self, id: &str) -> Result<ClosedSession, ServiceError> {
        let slot = self.slot(id)?;
        let _guard = slot.claim(id)?;
        if let Some(path) = slot.transcript.read().expect("session lock poisoned").as_ref() {
            return Ok(ClosedSession {
                transcript_path: path.display().to_string(),
            });
        }
        let view = slot.snapshot();
        let dir = self.root.join("transcripts");
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{id}.json"));
        std::fs::write(&path, Transcript::new(view.level, &view.history).to_json_string())?;
        slot.view.write().expect("session lock poisoned").status = SessionStatus::Closed;
        *slot.transcript.write().expect("session lock poisoned") = Some(path.clone());
        tracing::info!(session_id = %id, path = %path.display(), "session closed");
        Ok(ClosedSession {
            transcript_path: path.display().to_string(),
        })
    }
}
