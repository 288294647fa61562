//! JSON HTTP interface under `/api/v1`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use esd_core::evvr::{rule_catalog, validate_record, CATALOG_VERSION};
use esd_core::moderation::{Actor, Decision, ModerationError, ModerationState, SubmissionEnvelope};
use esd_core::query::{self, FilterSpec, NumericField, QueryError};
use esd_core::record::{AccessionId, ExperimentRecord};
use esd_core::release::ReleaseError;
use esd_core::store::{Store, StoreError};
use esd_core::{emcv, ValidationReport};

use crate::auth::Role;
use crate::App;

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 1000;
pub const DEFAULT_BINS: usize = 10;

/// Fields summarized when a stats request names none.
pub const DEFAULT_STATS_FIELDS: [NumericField; 5] = [
    NumericField::Voltage,
    NumericField::FlowRate,
    NumericField::Concentration,
    NumericField::TipCollectorDistance,
    NumericField::FiberDiameter,
];

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<Box<ValidationReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_id: Option<Uuid>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_owned(),
            detail: detail.into(),
            violations: None,
            envelope_id: None,
        }
    }

    pub fn unauthorized(detail: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", detail)
    }

    pub fn forbidden(detail: &str) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", detail)
    }

    fn bad_request(code: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, detail)
    }

    fn not_found(code: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, detail)
    }

    fn with_report(mut self, report: ValidationReport) -> Self {
        self.violations = Some(Box::new(report));
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(code = %self.code, detail = %self.detail, "request failed");
        }
        (status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Detached => Self::new(StatusCode::SERVICE_UNAVAILABLE, "store_unavailable", e.to_string()),
            StoreError::NotFound(_) => Self::not_found("not_found", e.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", other.to_string()),
        }
    }
}

impl From<ModerationError> for ApiError {
    fn from(e: ModerationError) -> Self {
        let detail = e.to_string();
        match e {
            ModerationError::MalformedRecord(_) => Self::bad_request("malformed_record", detail),
            ModerationError::MissingAttribution => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_attribution", detail),
            ModerationError::IllegalTransition { .. } => Self::new(StatusCode::CONFLICT, "illegal_transition", detail),
            ModerationError::MissingReason => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_reason", detail),
            ModerationError::UnknownEnvelope(_) => Self::not_found("unknown_envelope", detail),
            ModerationError::NotOwner(_) => Self::forbidden(&detail),
            ModerationError::Store(e) => e.into(),
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        Self::bad_request("invalid_filter", e.to_string())
    }
}

impl From<ReleaseError> for ApiError {
    fn from(e: ReleaseError) -> Self {
        let detail = e.to_string();
        match e {
            ReleaseError::UnknownRelease(_) => Self::not_found("unknown_release", detail),
            ReleaseError::UnknownArtifact(_) => Self::not_found("unknown_artifact", detail),
            ReleaseError::NothingToRelease | ReleaseError::ConcurrentCut => Self::new(StatusCode::CONFLICT, "release_conflict", detail),
            ReleaseError::Store(e) => e.into(),
            ReleaseError::Corrupt(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "release_corrupt", detail),
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<App>;
type Params = Vec<(String, String)>;

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/api/v1/records", post(submit).get(list_records))
        .route("/api/v1/records/{record_id}", get(get_record))
        .route("/api/v1/submissions/{envelope_id}", get(get_submission).put(revise))
        .route("/api/v1/stats/summary", get(stats))
        .route("/api/v1/moderation/queue", get(moderation_queue))
        .route("/api/v1/moderation/{envelope_id}/claim", post(claim))
        .route("/api/v1/moderation/{envelope_id}/decision", post(decide))
        .route("/api/v1/moderation/{envelope_id}/comment", post(comment))
        .route("/api/v1/vocabulary/emcv", get(vocabulary))
        .route("/api/v1/rules", get(rules))
        .route("/api/v1/releases", get(list_releases))
        .route("/api/v1/releases/{label}/{artifact}", get(fetch_release))
        .fallback(|| async { ApiError::not_found("not_found", "no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed for this endpoint")
        })
        .with_state(app)
}

fn parse_document<T: serde::de::DeserializeOwned>(body: &[u8], what: &str) -> ApiResult<T> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request("malformed_body", format!("body is not a JSON document: {e}")))?;
    if !value.is_object() {
        return Err(ApiError::bad_request("malformed_body", format!("{what} must be a JSON object")));
    }
    serde_json::from_value(value).map_err(|e| ApiError::bad_request("malformed_record", format!("invalid {what}: {e}")))
}

fn parse_envelope_id(s: &str) -> ApiResult<Uuid> {
    s.parse()
        .map_err(|_| ApiError::not_found("unknown_envelope", format!("{s:?} is not an envelope id")))
}

fn query_params(q: Result<Query<Params>, axum::extract::rejection::QueryRejection>) -> ApiResult<Params> {
    q.map(|Query(p)| p)
        .map_err(|e| ApiError::bad_request("invalid_filter", e.body_text()))
}

/// 201 when automated validation passed, otherwise 422 with the report.
fn submission_response(env: SubmissionEnvelope, ok: StatusCode) -> ApiResult<(StatusCode, Json<SubmissionEnvelope>)> {
    if env.state == ModerationState::Flagged {
        let report = env.validation.clone().expect("flagged envelopes carry a report");
        let mut err = ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation_failed",
            format!("automated validation failed: {}", report.rule_ids().join(", ")),
        )
        .with_report(report);
        err.envelope_id = Some(env.envelope_id);
        return Err(err);
    }
    Ok((ok, Json(env)))
}

fn attribution_error(record: &ExperimentRecord, e: ModerationError) -> ApiError {
    let is_attribution = matches!(e, ModerationError::MissingAttribution);
    let err = ApiError::from(e);
    if is_attribution {
        err.with_report(validate_record(record))
    } else {
        err
    }
}

async fn submit(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<(StatusCode, Json<SubmissionEnvelope>)> {
    let who = app.credentials.require(&headers, Role::Contributor)?;
    let record: ExperimentRecord = parse_document(&body, "record")?;
    let env = app
        .desk
        .submit(record.clone(), &Actor::contributor(&who.identity))
        .map_err(|e| attribution_error(&record, e))?;
    submission_response(env, StatusCode::CREATED)
}

async fn revise(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(envelope_id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SubmissionEnvelope>)> {
    let who = app.credentials.require(&headers, Role::Contributor)?;
    let id = parse_envelope_id(&envelope_id)?;
    let record: ExperimentRecord = parse_document(&body, "record")?;
    let env = app
        .desk
        .revise(id, record.clone(), &Actor::contributor(&who.identity))
        .map_err(|e| attribution_error(&record, e))?;
    submission_response(env, StatusCode::OK)
}

async fn get_submission(State(app): State<AppState>, headers: HeaderMap, Path(envelope_id): Path<String>) -> ApiResult<Json<SubmissionEnvelope>> {
    let moderator = app.credentials.require(&headers, Role::Moderator);
    let contributor = app.credentials.require(&headers, Role::Contributor);
    let id = parse_envelope_id(&envelope_id)?;
    match (moderator, contributor) {
        (Ok(_), _) => Ok(Json(app.desk.envelope(id)?)),
        (_, Ok(who)) => {
            let env = app.desk.envelope(id)?;
            if env.contributor != who.identity {
                return Err(ApiError::forbidden("this submission belongs to another contributor"));
            }
            Ok(Json(env))
        }
        (Err(e), Err(_)) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub record_id: AccessionId,
    pub doi: Option<String>,
    pub polymers: Vec<String>,
    pub solvents: Vec<String>,
    pub needle_class: Option<String>,
    pub collector_class: Option<String>,
    pub voltage_kv: Option<f64>,
    pub flow_rate_ml_h: Option<f64>,
    pub concentration_wtpct: Option<f64>,
    pub distance_cm: Option<f64>,
    pub fiber_diameter_nm: Option<f64>,
    pub morphology: Option<String>,
}

impl RecordSummary {
    pub fn of(r: &ExperimentRecord) -> Option<Self> {
        Some(Self {
            record_id: r.record_id?,
            doi: r.provenance.doi.clone(),
            polymers: r.polymer_ids().map(str::to_owned).collect(),
            solvents: r.solvent_ids().map(str::to_owned).collect(),
            needle_class: r.needle.needle_type.map(|c| c.to_string()),
            collector_class: r.collector.collector_type.map(|c| c.to_string()),
            voltage_kv: NumericField::Voltage.value(r),
            flow_rate_ml_h: NumericField::FlowRate.value(r),
            concentration_wtpct: NumericField::Concentration.value(r),
            distance_cm: NumericField::TipCollectorDistance.value(r),
            fiber_diameter_nm: NumericField::FiberDiameter.value(r),
            morphology: r.morphology.as_ref().map(|m| m.encoded()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPage {
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub items: Vec<RecordSummary>,
}

/// Splits reserved (non-filter) parameters off and parses the rest.
fn split_params(params: Params, reserved: &[&str]) -> ApiResult<(FilterSpec, Vec<(String, String)>)> {
    let (extra, filters): (Vec<_>, Vec<_>) = params.into_iter().partition(|(k, _)| reserved.contains(&k.as_str()));
    let spec = FilterSpec::from_params(filters.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    Ok((spec, extra))
}

fn parse_usize(key: &str, value: &str) -> ApiResult<usize> {
    value
        .parse()
        .map_err(|_| ApiError::bad_request("invalid_filter", format!("{key} must be a non-negative integer")))
}

async fn list_records(State(app): State<AppState>, q: Result<Query<Params>, axum::extract::rejection::QueryRejection>) -> ApiResult<Json<RecordPage>> {
    let (spec, extra) = split_params(query_params(q)?, &["limit", "offset"])?;
    let mut limit = DEFAULT_LIMIT;
    let mut offset = 0;
    for (k, v) in &extra {
        match k.as_str() {
            "limit" => limit = parse_usize(k, v)?,
            _ => offset = parse_usize(k, v)?,
        }
    }
    if limit == 0 || limit > MAX_LIMIT {
        return Err(ApiError::bad_request("invalid_filter", format!("limit must be within 1..={MAX_LIMIT}")));
    }
    let page = list_page(&app.store, &spec, limit, offset)?;
    Ok(Json(page))
}

async fn get_record(State(app): State<AppState>, Path(record_id): Path<String>) -> ApiResult<Json<ExperimentRecord>> {
    let id: AccessionId = record_id
        .parse()
        .map_err(|_| ApiError::not_found("not_found", format!("{record_id:?} is not an accession id")))?;
    Ok(Json(app.store.get_record(id)?))
}

async fn stats(State(app): State<AppState>, q: Result<Query<Params>, axum::extract::rejection::QueryRejection>) -> ApiResult<Json<query::SummaryStats>> {
    let (spec, extra) = split_params(query_params(q)?, &["fields", "histogram", "bins"])?;
    let mut fields: Vec<NumericField> = Vec::new();
    let mut histogram_field = None;
    let mut bins = DEFAULT_BINS;
    for (k, v) in &extra {
        match k.as_str() {
            "fields" => {
                for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    fields.push(name.parse()?);
                }
            }
            "histogram" => histogram_field = Some(v.parse::<NumericField>()?),
            _ => bins = parse_usize(k, v)?,
        }
    }
    if fields.is_empty() {
        fields = DEFAULT_STATS_FIELDS.to_vec();
    }
    if bins == 0 {
        return Err(QueryError::InvalidBins.into());
    }
    let stats = compute_stats(&app.store, &spec, &fields, histogram_field.map(|f| (f, bins)))?;
    Ok(Json(stats))
}

/// Summary statistics over the records matching `spec`; shared by the HTTP
/// and command-line front ends.
pub fn compute_stats(
    store: &Store,
    spec: &FilterSpec,
    fields: &[NumericField],
    histogram: Option<(NumericField, usize)>,
) -> ApiResult<query::SummaryStats> {
    let filter = spec.compile()?;
    let stats = store.with_records(|records| {
        let selected: Vec<&ExperimentRecord> = records.values().filter(|r| filter.matches(r)).collect();
        let mut stats = query::summarize_lenient(&selected, fields);
        if let Some((field, bins)) = histogram {
            stats.histogram = query::histogram(&selected, field, bins).ok();
        }
        stats
    })?;
    Ok(stats)
}

/// Matching records in accession order, paged.
pub fn list_page(store: &Store, spec: &FilterSpec, limit: usize, offset: usize) -> ApiResult<RecordPage> {
    let filter = spec.compile()?;
    let page = store.with_records(|records| {
        let matching: Vec<&ExperimentRecord> = records.values().filter(|r| filter.matches(r)).collect();
        RecordPage {
            total: matching.len(),
            limit,
            offset,
            items: matching
                .into_iter()
                .skip(offset)
                .take(limit)
                .filter_map(RecordSummary::of)
                .collect(),
        }
    })?;
    Ok(page)
}

async fn moderation_queue(
    State(app): State<AppState>,
    headers: HeaderMap,
    q: Result<Query<Params>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Json<Vec<SubmissionEnvelope>>> {
    app.credentials.require(&headers, Role::Moderator)?;
    let mut states = Vec::new();
    for (k, v) in query_params(q)? {
        if k != "state" {
            return Err(ApiError::bad_request("invalid_filter", format!("unknown parameter {k:?}")));
        }
        for s in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            states.push(
                ModerationState::parse(s).ok_or_else(|| ApiError::bad_request("invalid_filter", format!("unknown state {s:?}")))?,
            );
        }
    }
    if states.is_empty() {
        states = vec![ModerationState::AutoValidated, ModerationState::UnderReview];
    }
    Ok(Json(app.desk.queue(&states)?))
}

async fn claim(State(app): State<AppState>, headers: HeaderMap, Path(envelope_id): Path<String>) -> ApiResult<Json<SubmissionEnvelope>> {
    let who = app.credentials.require(&headers, Role::Moderator)?;
    let id = parse_envelope_id(&envelope_id)?;
    Ok(Json(app.desk.claim(id, &Actor::moderator(&who.identity))?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: Decision,
    #[serde(default)]
    reason: Option<String>,
}

async fn decide(State(app): State<AppState>, headers: HeaderMap, Path(envelope_id): Path<String>, body: Bytes) -> ApiResult<Json<SubmissionEnvelope>> {
    let who = app.credentials.require(&headers, Role::Moderator)?;
    let id = parse_envelope_id(&envelope_id)?;
    let body: DecisionBody = parse_document(&body, "decision")?;
    Ok(Json(app.desk.decide(id, body.decision, &Actor::moderator(&who.identity), body.reason.as_deref())?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommentBody {
    text: String,
}

async fn comment(State(app): State<AppState>, headers: HeaderMap, Path(envelope_id): Path<String>, body: Bytes) -> ApiResult<Json<SubmissionEnvelope>> {
    let who = app.credentials.require(&headers, Role::Moderator)?;
    let id = parse_envelope_id(&envelope_id)?;
    let body: CommentBody = parse_document(&body, "comment")?;
    if body.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_comment", "comment text must not be empty"));
    }
    Ok(Json(app.desk.comment(id, &Actor::moderator(&who.identity), &body.text)?))
}

async fn vocabulary(q: Result<Query<Params>, axum::extract::rejection::QueryRejection>) -> ApiResult<Json<emcv::VocabularyManifest>> {
    let params = query_params(q)?;
    let version = params
        .iter()
        .find(|(k, _)| k == "version")
        .map_or(emcv::BUILTIN_VERSION, |(_, v)| v.as_str());
    emcv::vocabulary_manifest(version)
        .map(Json)
        .map_err(|e| ApiError::not_found("unknown_vocabulary", e.to_string()))
}

async fn rules() -> Json<Value> {
    Json(json!({
        "catalog_version": CATALOG_VERSION,
        "rules": rule_catalog(),
    }))
}

async fn list_releases(State(app): State<AppState>) -> Json<Vec<esd_core::ReleaseManifest>> {
    Json(app.releases.list())
}

async fn fetch_release(State(app): State<AppState>, Path((label, artifact)): Path<(String, String)>) -> ApiResult<Response> {
    let (kind, bytes) = app.releases.fetch(&label, &artifact)?;
    let manifest = app.releases.manifest(&label)?;
    let mut response = (StatusCode::OK, bytes.as_ref().clone()).into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(kind.media_type()));
    if let Ok(v) = HeaderValue::from_str(&format!("attachment; filename=\"esd-{label}-{}\"", kind.file_name())) {
        headers.insert(header::CONTENT_DISPOSITION, v);
    }
    if let Some(digest) = manifest.digest_of(kind) {
        if let Ok(v) = HeaderValue::from_str(&format!("\"{digest}\"")) {
            headers.insert(header::ETAG, v);
        }
    }
    Ok(response)
}
