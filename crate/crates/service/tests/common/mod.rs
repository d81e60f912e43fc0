#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use hub_core::demo::{fixture_dir, prepare};
use hub_core::hub::{Hub, HubConfig, Models};
use hub_core::pipeline::{run_daily, RunOptions, RunStatus};
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Fixture {
    pub hub: Arc<Hub>,
    pub work: TempDir,
}

pub fn fixture_lines(name: &str) -> Vec<String> {
    fs::read_to_string(fixture_dir().join(name)).unwrap().lines().map(String::from).collect()
}

pub fn run_options() -> RunOptions {
    RunOptions { now: Utc.with_ymd_and_hms(2023, 7, 1, 6, 0, 0).unwrap(), inject_failure: None }
}

pub fn open(work: &Path) -> Hub {
    let cfg = HubConfig::load(work.join("hub.toml")).unwrap();
    Hub::open(work.join("data"), Models::load(&cfg).unwrap()).unwrap()
}

/// A prepared hub with nothing published.
pub fn empty_hub() -> Fixture {
    let work = tempfile::tempdir().unwrap();
    prepare(&fixture_dir(), work.path()).unwrap();
    Fixture { hub: Arc::new(open(work.path())), work }
}

/// A hub with the 1k collection fixture published.
pub fn published_hub() -> Fixture {
    let f = empty_hub();
    let run = run_daily(&f.hub, &fixture_lines("corpus_1k.jsonl"), &run_options()).unwrap();
    assert_eq!(run.status, RunStatus::Succeeded, "{}", run.summary_line());
    f
}

/// One published hub shared by the read-only tests of a binary.
pub fn shared() -> &'static Fixture {
    static SHARED: OnceLock<Fixture> = OnceLock::new();
    SHARED.get_or_init(published_hub)
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }

    pub fn snapshot_id(&self) -> &str {
        self.headers.get(hub_service::SNAPSHOT_HEADER).expect("snapshot header").to_str().unwrap()
    }
}

pub async fn send(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(app: &Router, uri: &str, body: serde_json::Value) -> Reply {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    send(app, req).await
}

pub fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap()
}
