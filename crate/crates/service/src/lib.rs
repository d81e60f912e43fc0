//! HTTP API over a [`Hub`]. Every read handler is a thin projection of a
//! `hub_core` call on the snapshot pinned for that request, and every
//! response carries that snapshot's id in [`SNAPSHOT_HEADER`].
//!
//! Errors share one JSON envelope: `{"status": 404, "code": "not_found",
//! "message": "..."}`.

use std::io::{self, Write};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, RawQuery, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use chrono::{NaiveDate, Utc};
use hub_core::export::{cite, CiteStyle};
use hub_core::hub::{Hub, HubError, HubSnapshot};
use hub_core::insights::Granularity;
use hub_core::longcovid::{Label, LoopError};
use hub_core::search::{parse_query, Facet, FacetQuery, SearchError, Sort};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

pub const SNAPSHOT_HEADER: &str = "x-snapshot-id";
/// Header value before anything has been published.
pub const NO_SNAPSHOT: &str = "none";

pub const DEFAULT_QUEUE_SIZE: usize = 10;
pub const MAX_QUEUE_SIZE: usize = 500;
pub use hub_core::insights::DEFAULT_TRENDING;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.to_string(), message: message.into() }
    }

    fn bad_param(param: &str, message: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_parameter", format!("{param}: {message}"))
    }

    fn search(param: &str, e: SearchError) -> Self {
        let code = match e {
            SearchError::BadFacet(_) => "bad_facet",
            SearchError::BadPage(_) => "bad_page",
            SearchError::BadQuery(_) => "bad_query",
            SearchError::AnnotationMismatch(_) => return ApiError::internal(e),
        };
        ApiError::new(StatusCode::BAD_REQUEST, code, format!("{param}: {e}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        log::error!("internal error: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        match e {
            HubError::NoSnapshot => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_snapshot", e.to_string()),
            HubError::NotFound(_) | HubError::Loop(LoopError::NotFound(_)) => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            HubError::Loop(LoopError::AlreadyDecided(_)) => {
                ApiError::new(StatusCode::CONFLICT, "already_decided", e.to_string())
            }
            HubError::Search(s) => ApiError::search("q", s),
            other => ApiError::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// The snapshot a request was served from, fixed when it arrived.
#[derive(Clone)]
struct Pinned(Option<Arc<HubSnapshot>>);

impl Pinned {
    fn get(&self) -> ApiResult<Arc<HubSnapshot>> {
        self.0.clone().ok_or_else(|| HubError::NoSnapshot.into())
    }
}

async fn pin_snapshot(State(hub): State<Arc<Hub>>, mut req: Request, next: Next) -> Response {
    let snap = hub.snapshot().ok();
    let id = snap.as_ref().map(|s| s.id.clone()).unwrap_or_else(|| NO_SNAPSHOT.to_string());
    req.extensions_mut().insert(Pinned(snap));
    let mut resp = next.run(req).await;
    if let Ok(v) = HeaderValue::from_str(&id) {
        resp.headers_mut().insert(SNAPSHOT_HEADER, v);
    }
    resp
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/api/stats/overview", get(overview))
        .route("/api/stats/growth", get(growth))
        .route("/api/stats/cooccurrence", get(cooccurrence))
        .route("/api/stats/trending", get(trending))
        .route("/api/stats/share", get(share))
        .route("/api/stats/topics", get(topics_per_article))
        .route("/api/search", get(search))
        .route("/api/doc/{pmid}", get(doc))
        .route("/api/doc/{pmid}/cite", get(cite_doc))
        .route("/api/review/queue", get(review_queue))
        .route("/api/review/{pmid}", post(review_decide))
        .route("/api/export", get(export))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "route_not_found", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(middleware::from_fn_with_state(hub.clone(), pin_snapshot))
        .with_state(hub)
}

pub async fn serve(hub: Arc<Hub>, addr: SocketAddr) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(hub)).await
}

fn params(raw: &Option<String>) -> Vec<(String, String)> {
    raw.as_deref().map(|q| form_urlencoded::parse(q.as_bytes()).into_owned().collect()).unwrap_or_default()
}

/// Rejects anything outside `allowed` and returns the last value per key.
fn simple_params(raw: &Option<String>, allowed: &[&str]) -> ApiResult<Vec<(String, String)>> {
    let ps = params(raw);
    for (k, _) in &ps {
        if !allowed.contains(&k.as_str()) {
            return Err(ApiError::bad_param(k, "unknown parameter"));
        }
    }
    Ok(ps)
}

fn param<'a>(ps: &'a [(String, String)], key: &str) -> Option<&'a str> {
    ps.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn parse_num(ps: &[(String, String)], key: &str, default: usize) -> ApiResult<usize> {
    match param(ps, key) {
        None => Ok(default),
        Some(v) => {
            v.parse().map_err(|_| ApiError::bad_param(key, format!("expected a non-negative integer, got {v:?}")))
        }
    }
}

fn parse_date(key: &str, v: &str) -> ApiResult<NaiveDate> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .map_err(|_| ApiError::bad_param(key, format!("expected YYYY-MM-DD, got {v:?}")))
}

/// Builds a [`FacetQuery`] from search parameters. Facet parameters may
/// repeat; repeated values of one facet are OR-ed. `extra` names
/// additional keys the caller handles itself.
pub fn facet_query(pairs: &[(String, String)], extra: &[&str]) -> Result<FacetQuery, ApiError> {
    let mut q = match param(pairs, "q") {
        Some(text) => parse_query(text).map_err(|e| ApiError::search("q", e))?,
        None => FacetQuery::default(),
    };
    for (k, v) in pairs {
        match k.as_str() {
            "q" => {}
            "topic" | "variant" | "vaccine" | "drug" | "journal" => {
                if v.is_empty() {
                    return Err(ApiError::bad_param(k, "empty value"));
                }
                let facet: Facet = k.parse().map_err(|e| ApiError::search(k, e))?;
                q.filters.entry(facet).or_default().insert(v.clone());
            }
            "from" => q.from = Some(parse_date(k, v)?),
            "to" => q.to = Some(parse_date(k, v)?),
            "page" => q.page = parse_num(pairs, k, 1)?,
            "size" => q.page_size = parse_num(pairs, k, 20)?,
            "sort" => q.sort = v.parse::<Sort>().map_err(|e| ApiError::search(k, e))?,
            other if extra.contains(&other) => {}
            other => return Err(ApiError::bad_param(other, "unknown parameter")),
        }
    }
    if let Err(e) = q.validate() {
        let which = if q.page < 1 { "page" } else { "size" };
        return Err(ApiError::search(which, e));
    }
    Ok(q)
}

fn parse_pmid(s: &str) -> ApiResult<u64> {
    s.parse().map_err(|_| ApiError::bad_param("pmid", format!("expected a positive integer, got {s:?}")))
}

async fn overview(Extension(p): Extension<Pinned>) -> ApiResult<Response> {
    Ok(Json(p.get()?.overview()).into_response())
}

async fn growth(Extension(p): Extension<Pinned>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let ps = simple_params(&raw, &["granularity"])?;
    let gran = match param(&ps, "granularity") {
        None => Granularity::Month,
        Some(g) => g.parse().map_err(|e: String| ApiError::bad_param("granularity", e))?,
    };
    Ok(Json(p.get()?.growth(gran)).into_response())
}

async fn cooccurrence(Extension(p): Extension<Pinned>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    simple_params(&raw, &[])?;
    Ok(Json(p.get()?.cooccurrence().clone()).into_response())
}

async fn trending(
    State(hub): State<Arc<Hub>>,
    Extension(p): Extension<Pinned>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Response> {
    let ps = simple_params(&raw, &["n"])?;
    let n = parse_num(&ps, "n", DEFAULT_TRENDING)?;
    Ok(Json(p.get()?.trending(&hub.models().trending, n)).into_response())
}

async fn share(State(hub): State<Arc<Hub>>, Extension(p): Extension<Pinned>) -> ApiResult<Response> {
    let snap = p.get()?;
    let Some(baseline) = hub.models().baseline.as_ref() else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_configured", "no baseline file configured"));
    };
    let rows = snap.share_ratio(baseline).map_err(ApiError::internal)?;
    Ok(Json(rows).into_response())
}

#[derive(Serialize)]
struct TopicsPerArticle<'a> {
    /// `counts[k]` is the number of articles with exactly k topics.
    counts: &'a [usize],
}

async fn topics_per_article(Extension(p): Extension<Pinned>) -> ApiResult<Response> {
    let snap = p.get()?;
    Ok(Json(TopicsPerArticle { counts: &snap.stats.topics_per_article }).into_response())
}

async fn search(Extension(p): Extension<Pinned>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let q = facet_query(&params(&raw), &[])?;
    let snap = p.get()?;
    let result = snap.search(&q).map_err(|e| ApiError::search("q", e))?;
    Ok(Json(result).into_response())
}

async fn doc(Extension(p): Extension<Pinned>, Path(pmid): Path<String>) -> ApiResult<Response> {
    let pmid = parse_pmid(&pmid)?;
    let snap = p.get()?;
    let view = snap.doc(pmid).ok_or(HubError::NotFound(pmid))?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub pmid: u64,
    pub style: String,
    pub citation: String,
}

async fn cite_doc(
    Extension(p): Extension<Pinned>,
    Path(pmid): Path<String>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Response> {
    let pmid = parse_pmid(&pmid)?;
    let ps = simple_params(&raw, &["style"])?;
    let style_name = param(&ps, "style").unwrap_or("text").to_string();
    let style: CiteStyle = style_name.parse().map_err(|e: String| ApiError::bad_param("style", e))?;
    let snap = p.get()?;
    snap.annotation(pmid).ok_or(HubError::NotFound(pmid))?;
    let record = snap.store.get(pmid).ok_or(HubError::NotFound(pmid))?;
    Ok(Json(Citation { pmid, style: style_name, citation: cite(record, style) }).into_response())
}

async fn review_queue(State(hub): State<Arc<Hub>>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let ps = simple_params(&raw, &["k"])?;
    let k = parse_num(&ps, "k", DEFAULT_QUEUE_SIZE)?;
    if k > MAX_QUEUE_SIZE {
        return Err(ApiError::bad_param("k", format!("at most {MAX_QUEUE_SIZE}")));
    }
    Ok(Json(hub.review_queue(k)).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionBody {
    pub label: Label,
    pub curator: String,
}

async fn review_decide(State(hub): State<Arc<Hub>>, Path(pmid): Path<String>, body: Bytes) -> ApiResult<Response> {
    let pmid = parse_pmid(&pmid)?;
    let body: DecisionBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_body", format!("body: {e}")))?;
    let curator = body.curator.trim().to_string();
    if curator.is_empty() {
        return Err(ApiError::bad_param("curator", "must not be empty"));
    }
    let who = curator.clone();
    let item = tokio::task::spawn_blocking(move || hub.decide(pmid, body.label, &who, Utc::now()))
        .await
        .map_err(ApiError::internal)??;
    log::info!("decision pmid={pmid} label={:?} curator={curator:?}", body.label);
    Ok(Json(item).into_response())
}

/// Sends written bytes to the response body in chunks.
struct ChunkWriter {
    tx: mpsc::Sender<io::Result<Bytes>>,
    buf: Vec<u8>,
}

const CHUNK: usize = 32 * 1024;

impl ChunkWriter {
    fn send(&mut self) -> io::Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let chunk = Bytes::from(std::mem::take(&mut self.buf));
        self.tx.blocking_send(Ok(chunk)).map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "client went away"))
    }
}

impl Write for ChunkWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        if self.buf.len() >= CHUNK {
            self.send()?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.send()
    }
}

/// Streams every hit, newest first. The pinned snapshot stays alive for the
/// whole stream, so a swap mid-export does not change its content.
async fn export(Extension(p): Extension<Pinned>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let pairs = params(&raw);
    let q = facet_query(&pairs, &["format"])?;
    let format = param(&pairs, "format").unwrap_or("jsonl").to_string();
    let content_type = match format.as_str() {
        "jsonl" => "application/x-ndjson",
        "csv" => "text/csv; charset=utf-8",
        other => return Err(ApiError::bad_param("format", format!("expected jsonl or csv, got {other:?}"))),
    };
    let snap = p.get()?;
    snap.export_ids(&q).map_err(|e| ApiError::search("q", e))?;

    let (tx, mut rx) = mpsc::channel::<io::Result<Bytes>>(8);
    tokio::task::spawn_blocking(move || {
        let mut w = ChunkWriter { tx: tx.clone(), buf: Vec::new() };
        let res = match format.as_str() {
            "csv" => snap.write_export_csv(&q, &mut w),
            _ => snap.write_export_jsonl(&q, &mut w),
        };
        let res = res.map_err(|e| io::Error::other(e.to_string())).and_then(|_| w.flush());
        if let Err(e) = res {
            log::warn!("export aborted: {e}");
            let _ = tx.blocking_send(Err(e));
        }
    });
    let stream = futures_util::stream::poll_fn(move |cx| rx.poll_recv(cx));
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from_stream(stream)).into_response())
}
