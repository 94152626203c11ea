//! HTTP service behind the expert review workflow.
//!
//! Raters authenticate with a bearer token from the config, pull sampled
//! annotated items one at a time and post either a quality verdict or four
//! 1..=5 explanation scores. Submissions go to an append-only JSONL log;
//! `/export` turns the current state into files the quality gate and the
//! human-eval aggregator read directly.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/queue/next?rater=` | next unlabelled item for the rater, or `{"status":"empty"}` |
//! | POST | `/labels` | `{"sample_id", "verdict"}` or `{"sample_id", "scores": {...}}` |
//! | GET | `/progress` | per-rater and total counts |
//! | GET | `/export?kind=&history=&format=` | label dump |

mod queue;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cogchain::chain::{serialize_chain, AnnotatedSample, Step};
use cogchain::eval::Aspect;
use cogchain::quality::{aggregate_labels, QualityVerdict};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;
use tower_http::services::ServeDir;

pub use queue::ReviewQueue;
pub use store::{AspectScores, LabelEvent, LabelKind, LabelStore, Payload};

fn default_bind() -> String {
    "127.0.0.1:8787".into()
}
fn default_queue_size() -> usize {
    531
}
fn default_labels() -> PathBuf {
    PathBuf::from("review/labels.jsonl")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterConfig {
    pub name: String,
    pub token: String,
}

/// The `[review]` table of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_queue_size")]
    pub queue_size: usize,
    /// Which submissions advance a rater through the queue.
    #[serde(default = "default_task")]
    pub task: LabelKind,
    #[serde(default = "default_labels")]
    pub labels: PathBuf,
    /// Directory of static review-ui assets, served at `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub raters: Vec<RaterConfig>,
}

fn default_task() -> LabelKind {
    LabelKind::Quality
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            bind: default_bind(),
            seed: 0,
            queue_size: default_queue_size(),
            task: default_task(),
            labels: default_labels(),
            static_dir: None,
            raters: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("invalid review config: {0}")]
    Config(String),
    #[error("label store {path}: {source}")]
    Store {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Clock = dyn Fn() -> u64 + Send + Sync;

pub struct ReviewService {
    cfg: ReviewConfig,
    queue: ReviewQueue,
    store: Mutex<LabelStore>,
    clock: Box<Clock>,
}

impl std::fmt::Debug for ReviewService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewService").field("cfg", &self.cfg).field("items", &self.queue.len()).finish()
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl ReviewService {
    pub fn new(cfg: ReviewConfig, samples: Vec<AnnotatedSample>) -> Result<Self, ReviewError> {
        if cfg.raters.is_empty() {
            return Err(ReviewError::Config("no raters configured".into()));
        }
        let mut names = HashSet::new();
        let mut tokens = HashSet::new();
        for r in &cfg.raters {
            if r.name.trim().is_empty() || r.token.trim().is_empty() {
                return Err(ReviewError::Config("rater name and token must be non-empty".into()));
            }
            if !names.insert(&r.name) || !tokens.insert(&r.token) {
                return Err(ReviewError::Config(format!("rater {:?} or its token is listed twice", r.name)));
            }
        }
        let store = LabelStore::open(&cfg.labels)
            .map_err(|source| ReviewError::Store { path: cfg.labels.display().to_string(), source })?;
        let queue = ReviewQueue::sample(samples, cfg.queue_size, cfg.seed);
        Ok(ReviewService { cfg, queue, store: Mutex::new(store), clock: Box::new(unix_now) })
    }

    /// Replaces the wall clock used to stamp submissions.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn queue(&self) -> &ReviewQueue {
        &self.queue
    }

    pub fn config(&self) -> &ReviewConfig {
        &self.cfg
    }

    fn rater_for_token(&self, token: &str) -> Option<&str> {
        self.cfg.raters.iter().find(|r| r.token == token).map(|r| r.name.as_str())
    }

    fn store(&self) -> std::sync::MutexGuard<'_, LabelStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(service: Arc<ReviewService>) -> Router {
    let api = Router::new()
        .route("/queue/next", get(next_item))
        .route("/labels", post(submit_label))
        .route("/progress", get(progress))
        .route("/export", get(export))
        .with_state(service.clone());
    match &service.cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `cfg.bind` and serves until the process stops.
pub async fn serve(service: Arc<ReviewService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&service.cfg.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, items = service.queue.len(), "review service listening");
    axum::serve(listener, router(service)).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), field: None }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, message: message.into(), field: Some(field.into()) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(f) = self.field {
            body["field"] = Value::String(f);
        }
        (self.status, Json(body)).into_response()
    }
}

fn authenticate<'s>(service: &'s ReviewService, headers: &HeaderMap) -> Result<&'s str, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing bearer token"))?;
    service.rater_for_token(token.trim()).ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unknown rater token"))
}

fn check_claimed(rater: &str, claimed: Option<&str>) -> Result<(), ApiError> {
    match claimed {
        Some(c) if c != rater => {
            Err(ApiError::new(StatusCode::FORBIDDEN, format!("token belongs to {rater:?}, not {c:?}")))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    rater: Option<String>,
}

fn item_payload(sample: &AnnotatedSample, position: usize, total: usize) -> Value {
    let chain = &sample.chain;
    json!({
        "status": "item",
        "position": position + 1,
        "total": total,
        "sample": {
            "sample_id": sample.id(),
            "text": sample.post.text,
            "gold_label": sample.post.gold_label,
            "source": sample.post.source,
            "produced_by_stage": sample.produced_by_stage,
            "steps": Step::ALL.map(|s| json!({"step": s.header(), "text": chain.step_text(s)})),
            "rendered": serialize_chain(chain),
        }
    })
}

async fn next_item(
    State(svc): State<Arc<ReviewService>>,
    headers: HeaderMap,
    Query(q): Query<NextQuery>,
) -> Result<Json<Value>, ApiError> {
    let rater = authenticate(&svc, &headers)?;
    check_claimed(rater, q.rater.as_deref())?;
    let store = svc.store();
    let done = store.labeled_by(rater, svc.cfg.task);
    let total = svc.queue.len();
    let next = svc.queue.items().iter().enumerate().find(|(_, s)| !done.contains(s.id()));
    Ok(Json(match next {
        Some((i, sample)) => item_payload(sample, i, total),
        None => json!({ "status": "empty", "total": total }),
    }))
}

fn score_of(scores: &Map<String, Value>, aspect: Aspect) -> Result<u8, ApiError> {
    let name = aspect.name();
    let value = scores
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name) || k.eq_ignore_ascii_case(aspect.code()))
        .map(|(_, v)| v)
        .ok_or_else(|| ApiError::field(name, format!("{name} score is missing")))?;
    value
        .as_u64()
        .filter(|s| (1..=5).contains(s))
        .map(|s| s as u8)
        .ok_or_else(|| ApiError::field(name, format!("{name} score {value} outside 1..=5")))
}

/// Validates a submission body, naming the offending field on failure.
fn parse_submission(svc: &ReviewService, body: &[u8]) -> Result<(String, Option<String>, Payload), ApiError> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::field("body", format!("invalid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| ApiError::field("body", "expected a JSON object"))?;
    let sample_id = match obj.get("sample_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(ApiError::field("sample_id", "sample_id is missing")),
    };
    if svc.queue.position(&sample_id).is_none() {
        return Err(ApiError::field("sample_id", format!("sample {sample_id:?} is not in the review queue")));
    }
    let claimed = match obj.get("rater") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(ApiError::field("rater", "rater must be a string")),
    };
    let payload = match (obj.get("verdict"), obj.get("scores")) {
        (Some(v), None) => {
            let verdict = match v.as_str().map(|s| s.trim().to_ascii_lowercase()).as_deref() {
                Some("qualified") => QualityVerdict::Qualified,
                Some("unqualified") => QualityVerdict::Unqualified,
                _ => return Err(ApiError::field("verdict", format!("verdict {v} is not qualified/unqualified"))),
            };
            Payload::Quality { verdict }
        }
        (None, Some(s)) => {
            let scores = s.as_object().ok_or_else(|| ApiError::field("scores", "scores must be an object"))?;
            Payload::Aspects {
                scores: AspectScores {
                    comprehension: score_of(scores, Aspect::Comprehension)?,
                    depth: score_of(scores, Aspect::Depth)?,
                    relevance: score_of(scores, Aspect::Relevance)?,
                    logic: score_of(scores, Aspect::Logic)?,
                },
            }
        }
        (Some(_), Some(_)) => return Err(ApiError::field("verdict", "send either a verdict or scores, not both")),
        (None, None) => return Err(ApiError::field("verdict", "a verdict or scores is required")),
    };
    Ok((sample_id, claimed, payload))
}

async fn submit_label(
    State(svc): State<Arc<ReviewService>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let rater = authenticate(&svc, &headers)?;
    let (sample_id, claimed, payload) = parse_submission(&svc, &body)?;
    check_claimed(rater, claimed.as_deref())?;
    let mut store = svc.store();
    let event = store
        .append(rater, &sample_id, payload, (svc.clock)())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("could not persist label: {e}")))?;
    let labeled = store.labeled_by(rater, svc.cfg.task).len();
    Ok(Json(json!({
        "ack": true,
        "seq": event.seq,
        "replaces": event.replaces,
        "labeled": labeled,
        "remaining": svc.queue.len().saturating_sub(labeled),
    })))
}

async fn progress(State(svc): State<Arc<ReviewService>>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    authenticate(&svc, &headers)?;
    let store = svc.store();
    let mut raters = BTreeMap::new();
    for r in &svc.cfg.raters {
        let quality = store.labeled_by(&r.name, LabelKind::Quality).len();
        let aspects = store.labeled_by(&r.name, LabelKind::Aspects).len();
        let task = if svc.cfg.task == LabelKind::Quality { quality } else { aspects };
        raters.insert(
            r.name.clone(),
            json!({ "quality": quality, "aspects": aspects, "remaining": svc.queue.len().saturating_sub(task) }),
        );
    }
    let labels = store.quality_labels();
    let votes = aggregate_labels(&labels);
    let qualified = votes.values().filter(|a| a.verdict == QualityVerdict::Qualified).count();
    Ok(Json(json!({
        "task": svc.cfg.task,
        "items": svc.queue.len(),
        "raters": raters,
        "quality": { "labels": labels.len(), "samples": votes.len(), "qualified": qualified, "unqualified": votes.len() - qualified },
        "aspects": { "ratings": store.ratings().len() },
        "events": store.history().len(),
    })))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    kind: Option<LabelKind>,
    #[serde(default)]
    history: bool,
    format: Option<String>,
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    rows.into_iter().map(|r| serde_json::to_string(&r).expect("row serializes") + "\n").collect()
}

async fn export(
    State(svc): State<Arc<ReviewService>>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    authenticate(&svc, &headers)?;
    let store = svc.store();
    const NDJSON: &str = "application/x-ndjson";
    if q.history {
        return Ok(([(header::CONTENT_TYPE, NDJSON)], jsonl(store.history())).into_response());
    }
    let kind = q.kind.unwrap_or(svc.cfg.task);
    let csv = match q.format.as_deref() {
        None | Some("jsonl") => false,
        Some("csv") if kind == LabelKind::Aspects => true,
        Some(other) => return Err(ApiError::field("format", format!("unsupported format {other:?} for {kind:?}"))),
    };
    let body = match kind {
        LabelKind::Quality => jsonl(store.quality_labels()),
        LabelKind::Aspects if csv => {
            let mut out = String::from("rater,sample_id,CO,DE,RE,LO\n");
            for r in store.ratings() {
                out.push_str(&format!("{},{},{},{},{},{}\n", r.rater, r.sample_id, r.co, r.de, r.re, r.lo));
            }
            return Ok(([(header::CONTENT_TYPE, "text/csv")], out).into_response());
        }
        LabelKind::Aspects => jsonl(store.ratings()),
    };
    Ok(([(header::CONTENT_TYPE, NDJSON)], body).into_response())
}
