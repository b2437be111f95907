//! JSON API behind the curation workbench. Every write goes through the
//! label store, so the audit log is the same as for CLI imports.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use jitlab::curation::{LabelRecord, LabelRequest, LabelStore, Rule, Section, Verdict};
use jitlab::szz::BugLinkage;
use jitlab::time::{self, Timestamp};
use jitlab::vcs::Miner;
use serde::{Deserialize, Serialize};

pub const RATER_HEADER: &str = "x-rater";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfcDiff {
    pub commit_id: String,
    pub diff: String,
}

/// Supplies the bug-fixing change diffs shown next to an issue.
pub trait DiffSource: Send + Sync {
    fn diffs(&self, issue_id: &str) -> Vec<BfcDiff>;
}

/// No diffs; for stores without a repository at hand.
pub struct NoDiffs;

impl DiffSource for NoDiffs {
    fn diffs(&self, _issue_id: &str) -> Vec<BfcDiff> {
        Vec::new()
    }
}

/// Fixed diffs per issue.
#[derive(Default)]
pub struct StaticDiffs(pub BTreeMap<String, Vec<BfcDiff>>);

impl DiffSource for StaticDiffs {
    fn diffs(&self, issue_id: &str) -> Vec<BfcDiff> {
        self.0.get(issue_id).cloned().unwrap_or_default()
    }
}

/// Diffs read from the repository for each issue's linked BFCs.
pub struct RepoDiffs {
    miner: Miner,
    bfcs: BTreeMap<String, Vec<String>>,
}

impl RepoDiffs {
    pub fn new(miner: Miner, linkages: &[BugLinkage]) -> Self {
        let bfcs = linkages
            .iter()
            .map(|l| (l.issue_id.clone(), l.bfc_ids.clone()))
            .collect();
        Self { miner, bfcs }
    }
}

impl DiffSource for RepoDiffs {
    fn diffs(&self, issue_id: &str) -> Vec<BfcDiff> {
        let Some(ids) = self.bfcs.get(issue_id) else {
            return Vec::new();
        };
        ids.iter()
            .map(|id| BfcDiff {
                commit_id: id.clone(),
                diff: self
                    .miner
                    .diff_text(id)
                    .unwrap_or_else(|e| format!("<diff unavailable: {e}>")),
            })
            .collect()
    }
}

pub struct AppState {
    pub store: Mutex<LabelStore>,
    pub diffs: Box<dyn DiffSource>,
}

impl AppState {
    pub fn new(store: LabelStore, diffs: Box<dyn DiffSource>) -> Arc<Self> {
        Arc::new(Self {
            store: Mutex::new(store),
            diffs,
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<jitlab::Error> for ApiError {
    fn from(e: jitlab::Error) -> Self {
        use jitlab::Error::*;
        let status = match &e {
            StaleRevision { .. } | NoOverlap | UnresolvedDisagreements(_) => StatusCode::CONFLICT,
            UnknownIssue(_) => StatusCode::NOT_FOUND,
            UnknownRule(_) | RuleMismatch { .. } | InvalidInput(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleGroup {
    pub section: Section,
    pub heading: String,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub issue_id: String,
    pub title: String,
    pub description: String,
    #[serde(with = "time::iso8601::option")]
    pub reported_time: Option<Timestamp>,
    pub reporter: String,
    pub bfc_diffs: Vec<BfcDiff>,
    pub rules: Vec<RuleGroup>,
    /// The rater's own current label, if any; its revision is the token
    /// for an overwrite.
    pub prior_label: Option<LabelRecord>,
    pub disputed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionRequest {
    pub issue_id: String,
    pub verdict: Verdict,
    pub rule_id: String,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub resolved_by: String,
}

fn rule_groups(store: &LabelStore) -> Vec<RuleGroup> {
    let mut groups: Vec<RuleGroup> = Vec::new();
    for rule in &store.catalog().rules {
        match groups.last_mut() {
            Some(g) if g.section == rule.section => g.rules.push(rule.clone()),
            _ => groups.push(RuleGroup {
                section: rule.section,
                heading: rule.section.heading().to_string(),
                rules: vec![rule.clone()],
            }),
        }
    }
    groups
}

fn header_rater(headers: &HeaderMap) -> Option<String> {
    headers
        .get(RATER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, LabelStore> {
    state.store.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Deserialize)]
struct RaterQuery {
    rater: Option<String>,
}

async fn next_task(
    State(state): State<Arc<AppState>>,
    Query(q): Query<RaterQuery>,
    headers: HeaderMap,
) -> ApiResult<Json<TaskView>> {
    let rater = q
        .rater
        .filter(|r| !r.trim().is_empty())
        .or_else(|| header_rater(&headers))
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing rater"))?;
    let (issue, prior_label, disputed, rules) = {
        let store = lock(&state);
        let issue = store
            .next_task(&rater)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no remaining task for {rater}")))?;
        let prior = store.label(&issue.issue_id, &rater).cloned();
        let disputed = store.disagreements().iter().any(|d| d.issue_id == issue.issue_id);
        (issue, prior, disputed, rule_groups(&store))
    };
    let bfc_diffs = state.diffs.diffs(&issue.issue_id);
    Ok(Json(TaskView {
        issue_id: issue.issue_id,
        title: issue.title,
        description: issue.description,
        reported_time: issue.reported_time,
        reporter: issue.reporter,
        bfc_diffs,
        rules,
        prior_label,
        disputed,
    }))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid body: {e}")))
}

/// Stores a label. Without a `revision` the request may only create a
/// label; overwriting requires the revision the rater last saw.
async fn post_label(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<LabelRecord>)> {
    let mut request: LabelRequest = parse_body(&body)?;
    if let Some(r) = header_rater(&headers) {
        if request.rater.trim().is_empty() {
            request.rater = r;
        } else if request.rater != r {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "rater header and body disagree"));
        }
    }
    request.revision = Some(request.revision.unwrap_or(0));
    let record = lock(&state).record_label(request)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn post_resolution(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<jitlab::curation::Resolution>)> {
    let mut req: ResolutionRequest = parse_body(&body)?;
    if req.resolved_by.trim().is_empty() {
        req.resolved_by = header_rater(&headers)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing resolved_by"))?;
    }
    let res = lock(&state).resolve(&req.issue_id, req.verdict, &req.rule_id, &req.note, &req.resolved_by)?;
    Ok((StatusCode::CREATED, Json(res)))
}

async fn agreement(State(state): State<Arc<AppState>>) -> ApiResult<Json<jitlab::curation::AgreementReport>> {
    Ok(Json(lock(&state).agreement_report()?))
}

async fn disagreements(State(state): State<Arc<AppState>>) -> Json<Vec<jitlab::curation::Disagreement>> {
    Json(lock(&state).disagreements())
}

async fn progress(State(state): State<Arc<AppState>>) -> Json<jitlab::curation::Progress> {
    Json(lock(&state).progress())
}

async fn rules(State(state): State<Arc<AppState>>) -> Json<Vec<RuleGroup>> {
    Json(rule_groups(&lock(&state)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/labels", post(post_label))
        .route("/api/resolutions", post(post_resolution))
        .route("/api/agreement", get(agreement))
        .route("/api/disagreements", get(disagreements))
        .route("/api/progress", get(progress))
        .route("/api/rules", get(rules))
        .with_state(state)
}

/// Serves the API until Ctrl-C.
pub async fn serve(state: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("curation API listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
