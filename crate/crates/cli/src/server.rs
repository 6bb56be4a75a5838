//! HTTP+JSON API over the generation service.
//!
//! Requests read one shared, immutable parameter snapshot. Session mutations
//! hold a per-session lock; generation runs as background jobs on a bounded
//! pool and is polled through `/jobs/{id}`.

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dashgen_core::agent::NetworkParams;
use dashgen_core::data::ColumnSummary;
use dashgen_core::env::{EnvError, PreparedDataset};
use dashgen_core::insight::InsightConfig;
use dashgen_core::service::{
    apply_edit, dashboard_view, diff_dashboards, editor_options, generate, new_id, recommend, DashboardDiff,
    DashboardView, Edit, GenerateConfig, HeadOptions, Recommendations, RecommendConfig, ServiceError, Session,
    SessionTopic, Store, StoreError,
};
use dashgen_core::train::Sampling;
use dashgen_core::{DashboardState, EnvConfig};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;
use tokio::sync::Semaphore;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(serde_json::json!({ "error": message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => ApiError::NotFound(e.to_string()),
            StoreError::InvalidId(_) | StoreError::Data(_) => ApiError::BadRequest(e.to_string()),
            StoreError::Json(_) | StoreError::Io(_) => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::ForeignDashboard(_) => ApiError::BadRequest(e.to_string()),
            ServiceError::InvalidEdit(_) | ServiceError::Chart(_) | ServiceError::Env(_) => {
                ApiError::Unprocessable(e.to_string())
            }
        }
    }
}

impl From<EnvError> for ApiError {
    fn from(e: EnvError) -> Self {
        ApiError::Unprocessable(e.to_string())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub dataset_id: String,
    pub status: JobStatus,
    pub quota: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<SessionTopic>>,
}

pub struct AppState {
    store: Store,
    params: Arc<NetworkParams>,
    env: EnvConfig,
    generate: GenerateConfig,
    recommend: RecommendConfig,
    datasets: Mutex<HashMap<String, Arc<PreparedDataset>>>,
    jobs: Mutex<HashMap<String, Job>>,
    job_slots: Arc<Semaphore>,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(
        store: Store,
        params: NetworkParams,
        env: EnvConfig,
        generate: GenerateConfig,
        recommend: RecommendConfig,
        job_workers: usize,
    ) -> Arc<Self> {
        Arc::new(Self {
            store,
            params: Arc::new(params),
            env,
            generate,
            recommend,
            datasets: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            job_slots: Arc::new(Semaphore::new(job_workers.max(1))),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    fn prepared(&self, id: &str) -> ApiResult<Arc<PreparedDataset>> {
        if let Some(d) = self.datasets.lock().get(id) {
            return Ok(d.clone());
        }
        let prepared = PreparedDataset::new(self.store.dataset(id)?, InsightConfig::default());
        self.datasets.lock().insert(id.to_string(), prepared.clone());
        Ok(prepared)
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.session_locks.lock().entry(id.to_string()).or_default().clone()
    }

    fn view(&self, data: &PreparedDataset, dataset_id: &str, state: &DashboardState) -> ApiResult<DashboardView> {
        Ok(dashboard_view(data, state, &self.env, &format!("/datasets/{dataset_id}/csv"))?)
    }

    fn set_job(&self, id: &str, update: impl FnOnce(&mut Job)) {
        if let Some(job) = self.jobs.lock().get_mut(id) {
            update(job);
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset).get(list_datasets))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/csv", get(get_dataset_csv))
        .route("/datasets/{id}/generate", post(start_generate))
        .route("/datasets/{id}/topics", get(get_topics))
        .route("/jobs/{id}", get(get_job))
        .route("/dashboards/{id}", get(get_dashboard))
        .route("/dashboards/{a}/diff/{b}", get(get_diff))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/edit", post(edit_session))
        .route("/sessions/{id}/recommend", post(recommend_session))
        .route("/sessions/{id}/options", post(session_options))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub name: String,
    pub row_count: usize,
    pub columns: Vec<ColumnSummary>,
    /// Columns past the agent's context are listed but never charted.
    pub truncated: bool,
}

fn dataset_info(id: &str, data: &PreparedDataset) -> DatasetInfo {
    DatasetInfo {
        id: id.to_string(),
        name: data.dataset.name.clone(),
        row_count: data.dataset.row_count,
        columns: data.dataset.summaries(),
        truncated: data.dataset.is_truncated(),
    }
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    name: Option<String>,
}

async fn upload_dataset(
    State(app): State<Arc<AppState>>,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let name = q.name.unwrap_or_else(|| "dataset".into());
    let (id, dataset) = app.store.add_dataset(&name, &body)?;
    let prepared = PreparedDataset::new(dataset, InsightConfig::default());
    app.datasets.lock().insert(id.clone(), prepared.clone());
    Ok((StatusCode::CREATED, Json(dataset_info(&id, &prepared))))
}

async fn list_datasets(State(app): State<Arc<AppState>>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(app.store.dataset_ids()?))
}

async fn get_dataset(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<DatasetInfo>> {
    let data = app.prepared(&id)?;
    Ok(Json(dataset_info(&id, &data)))
}

async fn get_dataset_csv(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let csv = app.store.dataset_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct GenerateQuery {
    pub quota: Option<usize>,
    pub per_topic: Option<bool>,
    pub seed: Option<u64>,
    pub sampling: Option<Sampling>,
}

async fn start_generate(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<GenerateQuery>,
) -> ApiResult<(StatusCode, Json<Job>)> {
    let data = app.prepared(&id)?;
    let config = GenerateConfig {
        quota: q.quota.unwrap_or(app.generate.quota),
        per_topic: q.per_topic.unwrap_or(app.generate.per_topic),
        seed: q.seed.unwrap_or(app.generate.seed),
        sampling: q.sampling.unwrap_or(app.generate.sampling),
    };
    let job = Job {
        id: new_id(),
        dataset_id: id.clone(),
        status: JobStatus::Queued,
        quota: config.quota,
        error: None,
        topics: None,
    };
    app.jobs.lock().insert(job.id.clone(), job.clone());
    let job_id = job.id.clone();
    let worker = app.clone();
    tokio::spawn(async move {
        let _permit = worker.job_slots.clone().acquire_owned().await;
        worker.set_job(&job_id, |j| j.status = JobStatus::Running);
        let app = worker.clone();
        let result = tokio::task::spawn_blocking(move || -> Result<Vec<SessionTopic>, String> {
            let topics = generate(&app.params, &data, &app.env, &config).map_err(|e| e.to_string())?;
            app.store.put_topics(&id, &topics).map_err(|e| e.to_string())
        })
        .await
        .unwrap_or_else(|e| Err(e.to_string()));
        worker.set_job(&job_id, |j| match result {
            Ok(topics) => {
                j.status = JobStatus::Done;
                j.topics = Some(topics);
            }
            Err(e) => {
                tracing::error!(job = %j.id, error = %e, "generation failed");
                j.status = JobStatus::Failed;
                j.error = Some(e);
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    app.jobs
        .lock()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("job {id:?} not found")))
}

async fn get_topics(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Vec<SessionTopic>>> {
    Ok(Json(app.store.topics(&id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DashboardResponse {
    pub id: String,
    pub dataset_id: String,
    pub episode_return: f64,
    #[serde(flatten)]
    pub view: DashboardView,
}

async fn get_dashboard(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DashboardResponse>> {
    let stored = app.store.dashboard(&id)?;
    let data = app.prepared(&stored.dataset_id)?;
    let view = app.view(&data, &stored.dataset_id, &stored.generated.state)?;
    Ok(Json(DashboardResponse {
        id,
        dataset_id: stored.dataset_id,
        episode_return: stored.generated.episode_return,
        view,
    }))
}

async fn get_diff(
    State(app): State<Arc<AppState>>,
    Path((a, b)): Path<(String, String)>,
) -> ApiResult<Json<DashboardDiff>> {
    let da = app.store.dashboard(&a)?;
    let db = app.store.dashboard(&b)?;
    if da.dataset_id != db.dataset_id {
        return Err(ServiceError::ForeignDashboard(b).into());
    }
    let data = app.prepared(&da.dataset_id)?;
    Ok(Json(diff_dashboards(&data, &da.generated.state, &db.generated.state)?))
}

#[derive(Debug, Deserialize)]
pub struct NewSession {
    pub dataset_id: String,
    /// Start from a generated dashboard.
    pub dashboard_id: Option<String>,
    /// Start from an empty dashboard on this key column.
    pub key_column: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session: Session,
    pub view: DashboardView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<DashboardDiff>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<NewSession>,
) -> ApiResult<(StatusCode, Json<SessionResponse>)> {
    let data = app.prepared(&req.dataset_id)?;
    let state = match (&req.dashboard_id, &req.key_column) {
        (Some(d), _) => {
            let stored = app.store.dashboard(d)?;
            if stored.dataset_id != req.dataset_id {
                return Err(ServiceError::ForeignDashboard(d.clone()).into());
            }
            stored.generated.state
        }
        (None, Some(key)) => {
            if data.context_index(key).is_none() {
                return Err(ApiError::Unprocessable(format!("{key:?} is not a usable key column")));
            }
            DashboardState::empty(key.clone())
        }
        (None, None) => {
            let first = data.dataset.context_columns().first();
            let key = first.ok_or_else(|| ApiError::Unprocessable("dataset has no columns".into()))?;
            DashboardState::empty(key.name.clone())
        }
    };
    let topics = match app.store.topics(&req.dataset_id) {
        Ok(t) => t,
        Err(StoreError::NotFound { .. }) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let session = Session {
        id: new_id(),
        dataset_id: req.dataset_id.clone(),
        state,
        history: Vec::new(),
        topics,
    };
    let view = app.view(&data, &session.dataset_id, &session.state)?;
    app.store.put_session(&session)?;
    Ok((StatusCode::CREATED, Json(SessionResponse { session, view, diff: None })))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionResponse>> {
    let session = app.store.session(&id)?;
    let data = app.prepared(&session.dataset_id)?;
    let view = app.view(&data, &session.dataset_id, &session.state)?;
    Ok(Json(SessionResponse { session, view, diff: None }))
}

async fn edit_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(edit): Json<Edit>,
) -> ApiResult<Json<SessionResponse>> {
    let lock = app.session_lock(&id);
    let _guard = lock.lock().await;
    let mut session = app.store.session(&id)?;
    let data = app.prepared(&session.dataset_id)?;
    let next = apply_edit(&data, &session.state, &edit, app.env.reward.n_max)?;
    let diff = diff_dashboards(&data, &session.state, &next)?;
    session.state = next;
    session.history.push(edit);
    let view = app.view(&data, &session.dataset_id, &session.state)?;
    app.store.put_session(&session)?;
    Ok(Json(SessionResponse {
        session,
        view,
        diff: Some(diff),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct RecommendQuery {
    pub steps: Option<usize>,
    pub top: Option<usize>,
    pub seed: Option<u64>,
}

async fn recommend_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RecommendQuery>,
) -> ApiResult<Json<Recommendations>> {
    let session = app.store.session(&id)?;
    let data = app.prepared(&session.dataset_id)?;
    let config = RecommendConfig {
        steps: q.steps.unwrap_or(app.recommend.steps),
        top: q.top.unwrap_or(app.recommend.top),
        seed: q.seed.unwrap_or(app.recommend.seed),
    };
    let worker = app.clone();
    let recs =
        tokio::task::spawn_blocking(move || recommend(&worker.params, &data, &worker.env, &session.state, &config))
            .await??;
    Ok(Json(recs))
}

#[derive(Debug, Default, Deserialize)]
pub struct OptionsRequest {
    /// Choices already made for the add heads, in head order.
    #[serde(default)]
    pub prefix: Vec<usize>,
}

async fn session_options(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<OptionsRequest>,
) -> ApiResult<Json<Vec<HeadOptions>>> {
    let session = app.store.session(&id)?;
    let data = app.prepared(&session.dataset_id)?;
    Ok(Json(editor_options(&data, &session.state, &app.env, &req.prefix)?))
}
