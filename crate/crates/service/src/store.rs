//! Session registry and on-disk persistence.

use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use prefbo::{ExperimentState, StateDocument};
use serde::{Deserialize, Serialize};

use crate::api::SessionSummary;
use crate::error::ApiError;

/// On-disk form of a session.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub id: String,
    pub created: u64,
    pub updated: u64,
    pub labels: Option<Vec<String>>,
    pub experiment: StateDocument,
}

#[derive(Clone, Debug)]
pub(crate) struct Committed {
    pub state: ExperimentState,
    pub labels: Option<Vec<String>>,
    pub created: u64,
    pub updated: u64,
}

pub(crate) struct Slot {
    id: String,
    writer: tokio::sync::Mutex<()>,
    committed: RwLock<Arc<Committed>>,
}

impl Slot {
    pub fn snapshot(&self) -> Arc<Committed> {
        self.committed.read().expect("session lock poisoned").clone()
    }

    /// Serialized read-modify-write. The closure works on a copy; nothing is
    /// committed or persisted unless it succeeds.
    pub async fn mutate<F, Fut>(&self, store: &Store, f: F) -> Result<Arc<Committed>, ApiError>
    where
        F: FnOnce(Committed) -> Fut,
        Fut: Future<Output = Result<Committed, ApiError>>,
    {
        let _guard = self.writer.lock().await;
        let base = (*self.snapshot()).clone();
        let mut next = f(base).await?;
        next.updated = now();
        store.persist(&self.id, &next).await?;
        let next = Arc::new(next);
        *self.committed.write().expect("session lock poisoned") = next.clone();
        Ok(next)
    }
}

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    sequence: AtomicU64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    /// Opens `dir`, creating it if needed, and loads every session file in
    /// it. Unreadable files are skipped with a warning.
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            match load(&path) {
                Ok(c) => {
                    let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    sessions.insert(id.clone(), Arc::new(slot(id, c)));
                }
                Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
            }
        }
        tracing::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(Store {
            dir,
            sequence: AtomicU64::new(sessions.len() as u64),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn next_sequence(&self) -> u64 {
        self.sequence.fetch_add(1, Ordering::Relaxed)
    }

    pub(crate) fn get(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("store lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub(crate) async fn insert(&self, state: ExperimentState, labels: Option<Vec<String>>) -> Result<String, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let t = now();
        let c = Committed {
            state,
            labels,
            created: t,
            updated: t,
        };
        self.persist(&id, &c).await?;
        self.sessions
            .write()
            .expect("store lock poisoned")
            .insert(id.clone(), Arc::new(slot(id.clone(), c)));
        Ok(id)
    }

    pub(crate) fn summaries(&self) -> Vec<SessionSummary> {
        let slots: Vec<Arc<Slot>> = self.sessions.read().expect("store lock poisoned").values().cloned().collect();
        let mut out: Vec<SessionSummary> = slots
            .iter()
            .map(|s| {
                let c = s.snapshot();
                SessionSummary {
                    id: s.id.clone(),
                    dim: c.state.dim(),
                    labels: c.labels.clone(),
                    n_comparisons: c.state.comparisons().len(),
                    created: c.created,
                    updated: c.updated,
                }
            })
            .collect();
        out.sort_by(|a, b| (a.created, &a.id).cmp(&(b.created, &b.id)));
        out
    }

    async fn persist(&self, id: &str, c: &Committed) -> Result<(), ApiError> {
        debug_assert!(valid_id(id));
        let file = SessionFile {
            id: id.to_string(),
            created: c.created,
            updated: c.updated,
            labels: c.labels.clone(),
            experiment: c.state.to_document(),
        };
        let text = serde_json::to_vec_pretty(&file).map_err(|e| ApiError::Internal(e.to_string()))?;
        let path = self.dir.join(format!("{id}.json"));
        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        let io = |e: std::io::Error| ApiError::Internal(format!("persisting session {id}: {e}"));
        tokio::fs::write(&tmp, text).await.map_err(io)?;
        tokio::fs::rename(&tmp, &path).await.map_err(io)?;
        Ok(())
    }
}

fn slot(id: String, c: Committed) -> Slot {
    Slot {
        id,
        writer: tokio::sync::Mutex::new(()),
        committed: RwLock::new(Arc::new(c)),
    }
}

fn load(path: &Path) -> anyhow::Result<Committed> {
    let text = std::fs::read_to_string(path)?;
    let file: SessionFile = serde_json::from_str(&text)?;
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    anyhow::ensure!(file.id == stem && valid_id(&file.id), "id {:?} does not match file name", file.id);
    Ok(Committed {
        state: ExperimentState::from_document(file.experiment)?,
        labels: file.labels,
        created: file.created,
        updated: file.updated,
    })
}
