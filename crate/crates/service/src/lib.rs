//! HTTP/JSON session service around [`prefbo::ExperimentState`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | [`CreateSession`](api::CreateSession) | 201 [`Created`](api::Created) |
//! | GET | `/sessions` | | list of [`SessionSummary`](api::SessionSummary) |
//! | POST | `/sessions/import` | experiment document | 201 [`Created`](api::Created) |
//! | GET | `/sessions/{id}/next` | | [`NextPair`](api::NextPair) |
//! | POST | `/sessions/{id}/preference` | [`PostPreference`](api::PostPreference) | [`PreferenceAccepted`](api::PreferenceAccepted) |
//! | GET | `/sessions/{id}/history` | | [`History`](api::History) |
//! | GET | `/sessions/{id}/export` | | experiment document |
//!
//! Errors are `{"error": "..."}` with status 400 (validation), 404 (unknown
//! session), 409 (preference does not match the outstanding pair) or 503
//! (model work exceeded the time limit).
//!
//! Each session is stored as one JSON file in the data directory and
//! mutations on a session are serialized. Reads see the last committed state.

pub mod api;
mod error;
mod store;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use prefbo::experiment::DEDUP_TOL;
use prefbo::{split_seed, ExperimentConfig, ExperimentState, Outcome, StateDocument};
use tower_http::cors::CorsLayer;

use crate::api::*;
pub use crate::error::ApiError;
pub use crate::store::{SessionFile, Store};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Master seed for sessions created without an explicit seed.
    pub seed: u64,
    /// Upper bound on a single fit or proposal.
    pub timeout: Duration,
    /// Engine settings applied to new sessions.
    pub experiment: ExperimentConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            seed: 0,
            timeout: Duration::from_secs(30),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(store: Store, config: ServiceConfig) -> Self {
        AppState {
            store: Arc::new(store),
            config: Arc::new(config),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{id}/next", get(next_pair))
        .route("/sessions/{id}/preference", post(post_preference))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/export", get(export))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs engine work off the async runtime, bounded by the configured timeout.
async fn run_model<T, F>(timeout: Duration, work: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    let task = tokio::task::spawn_blocking(work);
    match tokio::time::timeout(timeout, task).await {
        Ok(Ok(r)) => r,
        Ok(Err(join)) => Err(ApiError::Internal(format!("model task failed: {join}"))),
        Err(_) => Err(ApiError::Timeout(timeout.as_secs())),
    }
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateSession = parse_body(&body)?;
    let dim = req.bbox.dim();
    if let Some(labels) = &req.labels {
        if labels.len() != dim {
            return Err(ApiError::BadRequest(format!("{} labels for a {dim}-dimensional box", labels.len())));
        }
    }
    let hyper = req.hyper.as_ref().map(|h| h.apply(&req.bbox));
    let seed = match req.seed {
        Some(s) => s,
        None => split_seed(app.config.seed, app.store.next_sequence()),
    };
    let mut config = app.config.experiment.clone();
    config.seed = seed;
    if let Some(kind) = req.acquisition {
        config.acquisition = kind;
    }
    let state = ExperimentState::new(req.bbox, hyper, config)?;
    let n_init = state.design().len();
    let id = app.store.insert(state, req.labels).await?;
    Ok((StatusCode::CREATED, Json(Created { id, dim, n_init, seed })))
}

async fn import_session(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let doc: StateDocument = parse_body(&body)?;
    let state = ExperimentState::from_document(doc)?;
    let (dim, n_init, seed) = (state.dim(), state.design().len(), state.config().seed);
    let id = app.store.insert(state, None).await?;
    Ok((StatusCode::CREATED, Json(Created { id, dim, n_init, seed })))
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(app.store.summaries())
}

fn next_body(state: &ExperimentState) -> Option<NextPair> {
    state.pending().map(|(a, b)| NextPair {
        pair: [a.clone(), b.clone()],
        iteration: state.comparisons().len() + 1,
        phase: state.phase(),
    })
}

async fn next_pair(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<NextPair>> {
    let slot = app.store.get(&id)?;
    if let Some(body) = next_body(&slot.snapshot().state) {
        return Ok(Json(body));
    }
    let timeout = app.config.timeout;
    let committed = slot
        .mutate(&app.store, |mut s| async move {
            run_model(timeout, move || {
                s.state.find_next()?;
                Ok(s)
            })
            .await
        })
        .await?;
    Ok(Json(next_body(&committed.state).expect("find_next leaves a pending pair")))
}

async fn post_preference(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PreferenceAccepted>> {
    let slot = app.store.get(&id)?;
    let req: PostPreference = parse_body(&body)?;
    let order = Outcome::try_from(req.order)?;
    let timeout = app.config.timeout;
    let committed = slot
        .mutate(&app.store, |mut s| async move {
            let state = &s.state;
            for x in [&req.x1, &req.x2] {
                if x.dim() != state.dim() {
                    return Err(prefbo::Error::DimensionMismatch {
                        expected: state.dim(),
                        got: x.dim(),
                    }
                    .into());
                }
                if !state.bbox().contains(x) {
                    return Err(prefbo::Error::OutOfBox(x.coords().to_vec()).into());
                }
            }
            let Some((a, b)) = state.pending().cloned() else {
                return Err(ApiError::Conflict("no outstanding pair; request one from /next first".into()));
            };
            let (x1, x2) = if req.x1.approx_eq(&a, DEDUP_TOL) && req.x2.approx_eq(&b, DEDUP_TOL) {
                (a, b)
            } else if req.x1.approx_eq(&b, DEDUP_TOL) && req.x2.approx_eq(&a, DEDUP_TOL) {
                (b, a)
            } else {
                return Err(ApiError::Conflict("pair does not match the outstanding pair".into()));
            };
            run_model(timeout, move || {
                s.state.prefer(&x1, &x2, order)?;
                Ok(s)
            })
            .await
        })
        .await?;
    let st = &committed.state;
    Ok(Json(PreferenceAccepted {
        best: st.best_point().cloned().expect("incumbent exists after a comparison"),
        n_points: st.points().len(),
        n_comparisons: st.comparisons().len(),
    }))
}

async fn history(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<History>> {
    let snap = app.store.get(&id)?.snapshot();
    let st = &snap.state;
    let pts = st.points();
    Ok(Json(History {
        labels: snap.labels.clone(),
        comparisons: st
            .comparisons()
            .iter()
            .map(|c| HistoryEntry {
                x1: pts[c.i].clone(),
                x2: pts[c.j].clone(),
                order: c.outcome.as_i64(),
            })
            .collect(),
        best_trace: st.best_trace().into_iter().map(|i| pts[i].clone()).collect(),
        best: st.best_point().cloned(),
        phase: st.phase(),
    }))
}

async fn export(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StateDocument>> {
    Ok(Json(app.store.get(&id)?.snapshot().state.to_document()))
}
