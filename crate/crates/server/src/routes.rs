//! HTTP routes. Handlers run service calls on the blocking pool because
//! providers and sinks may do blocking network I/O.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use expertloop::channel::parse_webhook;
use expertloop::ids::{TaskId, UserId};
use expertloop::kb_update::ReviewOutcome;
use expertloop::language::audio::AudioHandle;
use expertloop::onboarding::OnboardingForm;
use expertloop::service::{ConversationEntry, InboundOutcome, ServiceError, TaskFilter, TaskView};
use expertloop::workflow::{Decision, TaskState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::app::App;
use crate::error::ApiError;

/// Webhook bodies carry base64 audio, so allow more than axum's default.
pub const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/webhook/channel", post(webhook))
        .route("/onboard", post(onboard))
        .route("/admin/tasks", get(admin_tasks))
        .route("/kb/review", post(kb_review))
        .route("/conversation/{user_id}", get(conversation))
        .route("/tasks/{task_id}/decision", post(decision))
        .route("/tasks/{task_id}/correction", post(correction))
        .route("/audio/{handle}", get(audio))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(app)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

/// Accepts `Authorization: Bearer <token>` or `x-admin-token: <token>`.
/// With no token configured every admin request is refused.
fn require_admin(app: &App, headers: &HeaderMap) -> Result<(), ApiError> {
    let expected = app.admin_token().ok_or(ApiError::Unauthorized)?;
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let plain = headers.get("x-admin-token").and_then(|v| v.to_str().ok());
    match bearer.or(plain) {
        Some(given) if given == expected => Ok(()),
        _ => Err(ApiError::Unauthorized),
    }
}

async fn health(State(app): State<Arc<App>>) -> Json<Value> {
    let next_offset = app.read(|svc| svc.state().next_offset);
    Json(json!({"status": "ok", "next_offset": next_offset}))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WebhookReply {
    Handled { user_id: UserId },
    Duplicate,
}

async fn webhook(State(app): State<Arc<App>>, body: Bytes) -> Result<Json<WebhookReply>, ApiError> {
    let msg = parse_webhook(&body).map_err(ServiceError::from)?;
    let outcome = blocking(move || Ok(app.with_service(|svc, now| svc.handle_inbound(&msg, now))?)).await?;
    Ok(Json(match outcome {
        InboundOutcome::Handled { user_id } => WebhookReply::Handled { user_id },
        InboundOutcome::Duplicate => WebhookReply::Duplicate,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OnboardReply {
    pub user_ids: Vec<UserId>,
}

async fn onboard(State(app): State<Arc<App>>, headers: HeaderMap, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    require_admin(&app, &headers)?;
    let form: OnboardingForm = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("onboarding form: {e}")))?;
    let user_ids = blocking(move || Ok(app.with_service(|svc, now| svc.register(&form, now))?)).await?;
    Ok((StatusCode::CREATED, Json(OnboardReply { user_ids })))
}

#[derive(Debug, Default, Deserialize)]
struct TasksQuery {
    #[serde(default)]
    state: TaskFilter,
}

async fn admin_tasks(
    State(app): State<Arc<App>>,
    headers: HeaderMap,
    Query(q): Query<TasksQuery>,
) -> Result<Json<Vec<TaskView>>, ApiError> {
    require_admin(&app, &headers)?;
    Ok(Json(app.read(|svc| svc.tasks(q.state))))
}

async fn kb_review(State(app): State<Arc<App>>, headers: HeaderMap, body: String) -> Result<Json<ReviewOutcome>, ApiError> {
    require_admin(&app, &headers)?;
    let outcome = blocking(move || Ok(app.with_service(|svc, now| svc.ingest_review(&body, now))?)).await?;
    Ok(Json(outcome))
}

async fn conversation(
    State(app): State<Arc<App>>,
    headers: HeaderMap,
    Path(user_id): Path<String>,
) -> Result<Json<Vec<ConversationEntry>>, ApiError> {
    require_admin(&app, &headers)?;
    Ok(Json(app.read(|svc| svc.conversation(&UserId::new(user_id)))?))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionChoice {
    Yes,
    No,
    Reroute,
}

impl From<DecisionChoice> for Decision {
    fn from(c: DecisionChoice) -> Self {
        match c {
            DecisionChoice::Yes => Decision::Yes,
            DecisionChoice::No => Decision::No,
            DecisionChoice::Reroute => Decision::Reroute,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub expert_id: UserId,
    pub decision: DecisionChoice,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionReply {
    pub task_id: TaskId,
    pub state: TaskState,
}

async fn decision(
    State(app): State<Arc<App>>,
    headers: HeaderMap,
    Path(task_id): Path<String>,
    body: Bytes,
) -> Result<Json<DecisionReply>, ApiError> {
    require_admin(&app, &headers)?;
    let req: DecisionRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("decision: {e}")))?;
    let task_id = TaskId::new(task_id);
    let id = task_id.clone();
    let state = blocking(move || {
        Ok(app.with_service(|svc, now| svc.submit_decision(&req.expert_id, &id, req.decision.into(), now))?)
    })
    .await?;
    Ok(Json(DecisionReply { task_id, state }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub expert_id: UserId,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrectionReply {
    pub task_id: TaskId,
    pub final_answer: String,
}

async fn correction(
    State(app): State<Arc<App>>,
    headers: HeaderMap,
    Path(task_id): Path<String>,
    body: Bytes,
) -> Result<Json<CorrectionReply>, ApiError> {
    require_admin(&app, &headers)?;
    let req: CorrectionRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("correction: {e}")))?;
    let task_id = TaskId::new(task_id);
    let id = task_id.clone();
    let final_answer =
        blocking(move || Ok(app.with_service(|svc, now| svc.submit_correction(&req.expert_id, &id, &req.text, now))?)).await?;
    Ok(Json(CorrectionReply { task_id, final_answer }))
}

async fn audio(State(app): State<Arc<App>>, headers: HeaderMap, Path(handle): Path<String>) -> Result<impl IntoResponse, ApiError> {
    require_admin(&app, &headers)?;
    let bytes = app
        .read(|svc| svc.language().audio_store().get(&AudioHandle(handle.clone())))
        .map_err(|_| ApiError::NotFound(format!("no audio {handle}")))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes))
}
