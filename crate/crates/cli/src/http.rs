//! JSON over HTTP for participants (`/api/...`) and administrators (`/admin/...`).
//!
//! Every route except `POST /api/login` expects `Authorization: Bearer <token>`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Duration;
use fakebook_core::fixture::FixtureFiles;
use fakebook_core::measures::SurveyPhase;
use fakebook_core::platform::{ExportBundle, ExportOptions, NewExperiment, Platform, PlatformError};
use fakebook_core::stats::{build_results_report, ReportFormat, TestOptions};
use fakebook_core::{
    AccountId, AdId, Condition, ExperimentId, FeatureFlags, PostId, ReactionKind, VirtualClock,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    /// Present only in virtual-clock mode.
    pub clock: Option<VirtualClock>,
}

/// A [`PlatformError`] rendered as a status code and JSON body.
#[derive(Debug)]
pub struct ApiError(pub PlatformError);

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        Self(e)
    }
}

pub fn status_of(err: &PlatformError) -> StatusCode {
    match err {
        PlatformError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
        PlatformError::Forbidden(_) => StatusCode::FORBIDDEN,
        PlatformError::NotFound(_) => StatusCode::NOT_FOUND,
        PlatformError::Conflict(_) => StatusCode::CONFLICT,
        PlatformError::Validation(_) | PlatformError::FixtureParse(_) | PlatformError::InvalidFixture(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        PlatformError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let mut body = json!({ "error": self.0.to_string() });
        if let PlatformError::InvalidFixture(report) = &self.0 {
            body["report"] = serde_json::to_value(report).unwrap_or_default();
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// The bearer token of the request.
pub struct Bearer(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Bearer {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(|t| Bearer(t.trim().to_owned()))
            .filter(|b| !b.0.is_empty())
            .ok_or_else(|| ApiError(PlatformError::Unauthorized("missing bearer token".into())))
    }
}

pub fn router(state: AppState) -> Router {
    let mut admin = Router::new()
        .route(
            "/admin/experiments",
            get(list_experiments).post(create_experiment),
        )
        .route("/admin/experiments/{id}", get(get_experiment))
        .route("/admin/experiments/{id}/export", get(export))
        .route(
            "/admin/experiments/{id}/flags",
            get(get_flags).put(set_flags).post(set_flags),
        )
        .route("/admin/experiments/{id}/ledger", get(ledger))
        .route("/admin/experiments/{id}/compliance", get(compliance))
        .route("/admin/fixtures/validate", post(validate_fixture))
        .route("/admin/report", get(report));
    if state.clock.is_some() {
        admin = admin.route("/admin/clock/advance", post(advance_clock));
    }
    Router::new()
        .route("/api/login", post(login))
        .route("/api/feed", get(feed))
        .route("/api/posts", post(create_post))
        .route("/api/posts/{id}/reactions", post(react).delete(unreact))
        .route("/api/profiles/{id}", get(profile))
        .route("/api/telemetry/views", post(record_view))
        .route("/api/telemetry/ad-clicks", post(record_ad_click))
        .route("/api/session/end", post(end_session))
        .route("/api/surveys", get(instruments).post(submit_survey))
        .merge(admin)
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginRequest {
    pub login: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PostRequest {
    pub body: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReactionRequest {
    pub kind: ReactionKind,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReactionQuery {
    #[serde(default = "like")]
    pub kind: ReactionKind,
}

fn like() -> ReactionKind {
    ReactionKind::Like
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ViewRequest {
    pub post_id: PostId,
    pub duration_ms: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdClickRequest {
    pub ad_id: AdId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SurveyRequest {
    pub phase: SurveyPhase,
    pub answers: BTreeMap<String, i32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub fixture: FixtureFiles,
    pub condition: Condition,
    #[serde(default)]
    pub day_count: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportQuery {
    /// Return one table as `text/csv` instead of the JSON map.
    pub table: Option<String>,
    #[serde(default)]
    pub include_display_names: bool,
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub format: Option<String>,
    #[serde(default)]
    pub continuity: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub seconds: i64,
}

async fn login(State(s): State<AppState>, Json(req): Json<LoginRequest>) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.login(&req.login, &req.password)?))
}

async fn feed(State(s): State<AppState>, Bearer(t): Bearer) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.get_feed(&t)?))
}

async fn create_post(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(req): Json<PostRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok((StatusCode::CREATED, Json(s.platform.create_post(&t, &req.body)?)))
}

async fn react(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
    Json(req): Json<ReactionRequest>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.react(&t, PostId(id), req.kind)?))
}

async fn unreact(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
    Query(q): Query<ReactionQuery>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.unreact(&t, PostId(id), q.kind)?))
}

async fn profile(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.get_profile(&t, AccountId(id))?))
}

async fn record_view(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(req): Json<ViewRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok((
        StatusCode::CREATED,
        Json(s.platform.record_view(&t, req.post_id, req.duration_ms)?),
    ))
}

async fn record_ad_click(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(req): Json<AdClickRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok((
        StatusCode::CREATED,
        Json(s.platform.record_ad_click(&t, req.ad_id)?),
    ))
}

async fn end_session(State(s): State<AppState>, Bearer(t): Bearer) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.end_session(&t)?))
}

async fn instruments(State(s): State<AppState>, Bearer(t): Bearer) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.survey_instruments(&t)?))
}

async fn submit_survey(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(req): Json<SurveyRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok((
        StatusCode::CREATED,
        Json(s.platform.submit_survey(&t, req.phase, req.answers)?),
    ))
}

async fn list_experiments(State(s): State<AppState>, Bearer(t): Bearer) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.admin_experiments(&t)?))
}

async fn create_experiment(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(spec): Json<NewExperiment>,
) -> Result<impl IntoResponse, ApiError> {
    Ok((
        StatusCode::CREATED,
        Json(s.platform.admin_create_experiment(&t, spec)?),
    ))
}

async fn get_experiment(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.admin_experiment(&t, ExperimentId(id))?))
}

async fn get_flags(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
) -> ApiResult<FeatureFlags> {
    Ok(Json(s.platform.admin_experiment(&t, ExperimentId(id))?.flags))
}

async fn set_flags(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
    Json(flags): Json<FeatureFlags>,
) -> ApiResult<FeatureFlags> {
    Ok(Json(s.platform.admin_set_flags(&t, ExperimentId(id), flags)?))
}

async fn ledger(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.admin_ledger(&t, ExperimentId(id))?))
}

async fn compliance(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.platform.admin_compliance(&t, ExperimentId(id))?))
}

async fn export(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Path(id): Path<u64>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let options = ExportOptions {
        include_display_names: q.include_display_names,
    };
    let bundle = s.platform.admin_export(&t, ExperimentId(id), options)?;
    match q.table {
        None => Ok(Json(bundle.to_csv_map()).into_response()),
        Some(name) => {
            let table = bundle
                .table(&name)
                .ok_or_else(|| PlatformError::NotFound(format!("export table {name}")))?;
            let disposition = format!("attachment; filename=\"experiment-{id}-{name}.csv\"");
            Ok((
                [
                    (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_owned()),
                    (header::CONTENT_DISPOSITION, disposition),
                ],
                table.to_csv(),
            )
                .into_response())
        }
    }
}

async fn validate_fixture(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(req): Json<ValidateRequest>,
) -> ApiResult<impl Serialize> {
    let days = req
        .day_count
        .unwrap_or(fakebook_core::model::Experiment::DEFAULT_DAY_COUNT);
    Ok(Json(s.platform.admin_validate_fixture(
        &t,
        &req.fixture,
        req.condition,
        days,
    )?))
}

/// Results report over every experiment on the deployment.
async fn report(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let format: ReportFormat = q
        .format
        .as_deref()
        .unwrap_or("json")
        .parse()
        .map_err(|e| PlatformError::Validation(format!("{e}")))?;
    let mut bundles: Vec<ExportBundle> = Vec::new();
    for summary in s.platform.admin_experiments(&t)? {
        bundles.push(
            s.platform
                .admin_export(&t, summary.experiment_id, ExportOptions::default())?,
        );
    }
    let data = crate::report::dataset_from_bundles(&bundles)
        .map_err(|e| PlatformError::Storage(format!("{e:#}")))?;
    let options = TestOptions {
        continuity: q.continuity,
        ..TestOptions::default()
    };
    let text = build_results_report(&data, s.platform.instruments(), options).render(format);
    let content_type = match format {
        ReportFormat::Text => "text/plain; charset=utf-8",
        ReportFormat::Csv => "text/csv; charset=utf-8",
        ReportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], text).into_response())
}

async fn advance_clock(
    State(s): State<AppState>,
    Bearer(t): Bearer,
    Json(req): Json<AdvanceRequest>,
) -> ApiResult<impl Serialize> {
    // admin check first; the listing is discarded
    s.platform.admin_experiments(&t)?;
    if req.seconds < 0 {
        return Err(PlatformError::Validation("the clock only moves forward".into()).into());
    }
    let clock = s.clock.as_ref().expect("route exists only with a virtual clock");
    let now = clock.advance(Duration::seconds(req.seconds));
    let summary = s.platform.tick()?;
    Ok(Json(
        json!({ "now": now, "executed": summary.executed, "sessions_closed": summary.sessions_closed }),
    ))
}
