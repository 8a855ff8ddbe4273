//! HTTP/JSON surface for the signal server and the matcher.
//!
//! Devices authenticate by possession of their id (`Authorization: Bearer
//! <device uuid>` where a request acts for a device); authorities and the
//! matcher channel use static bearer secrets.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use netdist_core::cases::CaseError;
use netdist_core::ids::AuthorityId;
use netdist_core::ingest::{Accepted, IngestError};
use netdist_core::wifi::{HashedBssid, SingleUseId, SingleUsePair, Submission, WifiError};
use netdist_core::{CaseKind, DetectionRecord, DeviceId};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::matcher::{MatcherError, MatcherService};
use crate::server::{ServerError, SignalServer};

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn api_error(status: StatusCode, error: &'static str, message: impl ToString) -> ApiError {
    ApiError(status, ErrorBody { error, message: message.to_string() })
}

impl From<ServerError> for ApiError {
    fn from(e: ServerError) -> Self {
        let msg = e.to_string();
        match &e {
            ServerError::UnknownDevice(_) => api_error(StatusCode::NOT_FOUND, "unknown-device", msg),
            ServerError::Ingest(i) => {
                let status = match i {
                    IngestError::UnknownReporter(_) => StatusCode::NOT_FOUND,
                    IngestError::StaleTimestamp { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                    IngestError::MalformedChannelFields(_) => StatusCode::BAD_REQUEST,
                };
                api_error(status, i.reason(), msg)
            }
            ServerError::Case(c) => {
                let status = match c {
                    CaseError::UnauthorizedAuthority => StatusCode::UNAUTHORIZED,
                    CaseError::UnknownToken => StatusCode::NOT_FOUND,
                    CaseError::AlreadyConsumed => StatusCode::CONFLICT,
                    CaseError::Expired => StatusCode::GONE,
                    CaseError::WrongCommunityScope => StatusCode::FORBIDDEN,
                    CaseError::InvalidSymptomDate => StatusCode::BAD_REQUEST,
                    CaseError::UnauthenticatedDisabled => StatusCode::UNAUTHORIZED,
                };
                api_error(status, c.reason(), msg)
            }
            ServerError::Registry(_) => api_error(StatusCode::CONFLICT, "duplicate-device", msg),
            ServerError::Store(_) => api_error(StatusCode::INTERNAL_SERVER_ERROR, "storage", msg),
            ServerError::Unauthorized => api_error(StatusCode::UNAUTHORIZED, "unauthorized", msg),
        }
    }
}

impl From<MatcherError> for ApiError {
    fn from(e: MatcherError) -> Self {
        match e {
            MatcherError::Wifi(WifiError::DuplicateSingleUseId(_)) => {
                api_error(StatusCode::CONFLICT, "duplicate-single-use-id", e)
            }
            MatcherError::Unauthorized => api_error(StatusCode::UNAUTHORIZED, "unauthorized", e),
        }
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(axum::http::header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn bearer_device(headers: &HeaderMap) -> Result<DeviceId, ApiError> {
    bearer(headers)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| api_error(StatusCode::UNAUTHORIZED, "unauthorized", "missing or malformed device bearer"))
}

fn parse_device(s: &str) -> Result<DeviceId, ApiError> {
    s.parse().map_err(|_| api_error(StatusCode::BAD_REQUEST, "malformed-device-id", s))
}

type Srv = Arc<SignalServer>;

#[derive(Debug, Default, Deserialize)]
pub struct RegisterBody {
    #[serde(default)]
    pub community: Option<AuthorityId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub device: DeviceId,
}

async fn register(State(s): State<Srv>, body: Option<Json<RegisterBody>>) -> Result<Json<RegisterResponse>, ApiError> {
    let community = body.and_then(|Json(b)| b.community);
    Ok(Json(RegisterResponse { device: s.register_device(community)? }))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DetectionBody {
    Many(Vec<DetectionRecord>),
    One(DetectionRecord),
}

fn accepted_json(a: Accepted) -> serde_json::Value {
    json!({ "status": "accepted", "duplicate": a == Accepted::Duplicate })
}

async fn detections(State(s): State<Srv>, Json(body): Json<DetectionBody>) -> Result<Response, ApiError> {
    match body {
        DetectionBody::One(rec) => Ok(Json(accepted_json(s.ingest(&rec)?)).into_response()),
        DetectionBody::Many(recs) => {
            let results: Vec<serde_json::Value> = s
                .ingest_batch(&recs)
                .into_iter()
                .map(|r| match r {
                    Ok(a) => accepted_json(a),
                    Err(e) => {
                        let ApiError(_, body) = e.into();
                        json!({ "status": "rejected", "reason": body.error })
                    }
                })
                .collect();
            Ok(Json(results).into_response())
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct ReportBody {
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub symptom_start: Option<NaiveDate>,
}

async fn reports(
    State(s): State<Srv>,
    headers: HeaderMap,
    Json(body): Json<ReportBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let device = bearer_device(&headers)?;
    let r = s.redeem(device, body.token.as_deref(), body.symptom_start)?;
    // The response deliberately omits the token.
    Ok(Json(json!({
        "case_id": r.report.case_id,
        "kind": r.report.kind,
        "symptom_start": r.report.symptom_start,
        "reported_at": r.report.reported_at,
    })))
}

#[derive(Debug, Deserialize)]
pub struct TokenBody {
    pub kind: CaseKind,
    pub count: usize,
}

async fn admin_tokens(
    State(s): State<Srv>,
    headers: HeaderMap,
    Json(body): Json<TokenBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let secret = bearer(&headers).unwrap_or_default();
    let tokens = s.issue_tokens(secret, body.kind, body.count)?;
    Ok(Json(json!({ "tokens": tokens })))
}

async fn chart(State(s): State<Srv>, Path(device): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let c = s.chart(&parse_device(&device)?)?;
    Ok(Json(json!({ "positive": c.positive, "contact": c.contact, "as_of": c.as_of })))
}

async fn network_chart(State(s): State<Srv>, Path(device): Path<String>) -> Result<Json<Vec<u64>>, ApiError> {
    Ok(Json(s.network_chart(&parse_device(&device)?)?.counts))
}

async fn health(State(s): State<Srv>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "generation": s.generation() }))
}

#[derive(Debug, Deserialize)]
pub struct AnnounceBody {
    pub single_use_id: SingleUseId,
}

async fn wifi_announce(
    State(s): State<Srv>,
    headers: HeaderMap,
    Json(body): Json<AnnounceBody>,
) -> Result<StatusCode, ApiError> {
    s.announce_single_use(bearer_device(&headers)?, body.single_use_id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairsBody {
    pub pairs: Vec<SingleUsePair>,
}

async fn wifi_pairs(
    State(s): State<Srv>,
    headers: HeaderMap,
    Json(body): Json<PairsBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let n = s.link_wifi_pairs(bearer(&headers).unwrap_or_default(), &body.pairs)?;
    Ok(Json(json!({ "records": n })))
}

/// Routes of the signal server.
pub fn router(server: Arc<SignalServer>) -> Router {
    Router::new()
        .route("/v1/devices", post(register))
        .route("/v1/detections", post(detections))
        .route("/v1/reports", post(reports))
        .route("/v1/admin/tokens", post(admin_tokens))
        .route("/v1/chart/{device}", get(chart))
        .route("/v1/network-chart/{device}", get(network_chart))
        .route("/v1/health", get(health))
        .route("/v1/wifi/announce", post(wifi_announce))
        .route("/v1/wifi/pairs", post(wifi_pairs))
        .with_state(server)
}

type Mtc = Arc<MatcherService>;

#[derive(Debug, Deserialize)]
pub struct ResolveBody {
    pub hashed_bssid: HashedBssid,
}

async fn m_resolve(State(m): State<Mtc>, Json(b): Json<ResolveBody>) -> Json<netdist_core::wifi::WifiTempId> {
    Json(m.resolve(&b.hashed_bssid))
}

async fn m_submit(State(m): State<Mtc>, Json(s): Json<Submission>) -> Result<StatusCode, ApiError> {
    m.submit(s)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn m_close(State(m): State<Mtc>, headers: HeaderMap) -> Result<Json<PairsBody>, ApiError> {
    let pairs = m.close_round(bearer(&headers).unwrap_or_default())?;
    Ok(Json(PairsBody { pairs }))
}

/// Routes of the matching entity.
pub fn matcher_router(matcher: Arc<MatcherService>) -> Router {
    Router::new()
        .route("/v1/wifi/resolve", post(m_resolve))
        .route("/v1/wifi/submit", post(m_submit))
        .route("/v1/wifi/close-round", post(m_close))
        .with_state(matcher)
}
