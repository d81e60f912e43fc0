use std::fs;
use std::path::Path;

use chrono::{TimeZone, Utc};
use hub_core::demo::{fixture_dir, prepare};
use hub_core::hub::{Hub, HubConfig, Models};
use hub_core::pipeline::{run_daily, RunOptions, RunStatus, Stage};
use hub_core::search::{parse_query, FacetQuery};

fn lines(name: &str) -> Vec<String> {
    fs::read_to_string(fixture_dir().join(name)).unwrap().lines().map(String::from).collect()
}

fn opts() -> RunOptions {
    RunOptions { now: Utc.with_ymd_and_hms(2023, 7, 1, 6, 0, 0).unwrap(), inject_failure: None }
}

fn open(work: &Path) -> Hub {
    let cfg = HubConfig::load(work.join("hub.toml")).unwrap();
    Hub::open(work.join("data"), Models::load(&cfg).unwrap()).unwrap()
}

fn snapshot_bytes(hub: &Hub) -> Vec<Vec<u8>> {
    let id = hub.snapshot().unwrap().id.clone();
    let dir = hub.dir().join("snapshots").join(id);
    let mut out: Vec<Vec<u8>> =
        ["annotations.jsonl", "index.jsonl", "stats.json"].iter().map(|f| fs::read(dir.join(f)).unwrap()).collect();
    out.push(fs::read(hub.dir().join("corpus/corpus.jsonl")).unwrap());
    out
}

fn assert_flow(run: &hub_core::pipeline::PipelineRun) {
    for pair in run.stages.windows(2) {
        assert_eq!(pair[1].input, pair[0].output, "{} -> {}", pair[0].stage, pair[1].stage);
    }
}

#[test]
fn daily_runs_are_atomic_idempotent_and_conserve_flow() {
    let work = tempfile::tempdir().unwrap();
    prepare(&fixture_dir(), work.path()).unwrap();
    let hub = open(work.path());
    assert!(hub.snapshot().is_err());

    let first = run_daily(&hub, &lines("corpus_1k.jsonl"), &opts()).unwrap();
    assert_eq!(first.status, RunStatus::Succeeded, "{}", first.summary_line());
    assert_eq!(first.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), Stage::ALL);
    assert_flow(&first);
    let snap = hub.snapshot().unwrap();
    assert_eq!(snap.overview().publications, first.stage(Stage::Triage).unwrap().output);
    assert!(snap.overview().publications >= 990);

    let delta = lines("delta.jsonl");
    let run = run_daily(&hub, &delta, &opts()).unwrap();
    assert_eq!(run.status, RunStatus::Succeeded);
    assert_flow(&run);
    assert_eq!(run.stage(Stage::Ingest).unwrap().output, 10);
    assert_eq!(run.stage(Stage::Topics).unwrap().input, 7);
    let after_delta = snapshot_bytes(&hub);
    let id = hub.snapshot().unwrap().id.clone();

    let again = run_daily(&hub, &delta, &opts()).unwrap();
    assert_eq!(again.status, RunStatus::Succeeded);
    assert_eq!(again.ingest.n_duplicate, 10);
    assert_eq!(again.stage(Stage::Triage).unwrap().input, 0);
    assert_eq!(hub.snapshot().unwrap().id, id);
    assert_eq!(snapshot_bytes(&hub), after_delta);

    // A failing entity stage publishes nothing.
    let probe = parse_query("vaccine:VAX:BNT162b2").unwrap();
    let before = hub.snapshot().unwrap().search(&probe).unwrap();
    let mut changed: serde_json::Value = serde_json::from_str(&delta[0]).unwrap();
    changed["title"] = "BNT162b2 boosters against the Omicron variant in covid-19".into();
    let line = changed.to_string();
    let failed =
        run_daily(&hub, std::slice::from_ref(&line), &RunOptions { inject_failure: Some(Stage::Entities), ..opts() })
            .unwrap();
    assert_eq!(failed.status, RunStatus::Failed(Stage::Entities));
    assert_eq!(failed.status.to_string(), "failed(entities)");
    assert_eq!(hub.snapshot().unwrap().id, id);
    assert_eq!(hub.snapshot().unwrap().search(&probe).unwrap(), before);
    assert_eq!(snapshot_bytes(&hub), after_delta);
    let report = fs::read_to_string(hub.dir().join("runs").join(format!("{}.jsonl", failed.run_id))).unwrap();
    assert!(report.lines().last().unwrap().contains("\"status\":\"failed(entities)\""));

    // The same change goes through once the stage works.
    let ok = run_daily(&hub, &[line], &opts()).unwrap();
    assert_eq!(ok.status, RunStatus::Succeeded);
    assert_eq!(ok.ingest.n_updated, 1);
    assert_ne!(hub.snapshot().unwrap().id, id);
    let pmid: u64 = changed["pmid"].as_u64().unwrap();
    let hits = hub.snapshot().unwrap().search(&FacetQuery::text("boosters")).unwrap();
    assert!(hits.hits.iter().any(|h| h.pmid == pmid));

    // Reopening restores the same snapshot.
    let live = hub.snapshot().unwrap().id.clone();
    drop(hub);
    let reopened = open(work.path());
    assert_eq!(reopened.snapshot().unwrap().id, live);
}

#[test]
fn records_committed_without_annotations_are_picked_up() {
    let work = tempfile::tempdir().unwrap();
    prepare(&fixture_dir(), work.path()).unwrap();
    let hub = open(work.path());
    let delta = lines("delta.jsonl");
    hub.store().ingest_batch(&delta, Default::default()).unwrap();
    let run = run_daily(&hub, &Vec::<String>::new(), &opts()).unwrap();
    assert_eq!(run.status, RunStatus::Succeeded);
    assert_eq!(run.stage(Stage::Ingest).unwrap().output, 10);
    assert_eq!(hub.snapshot().unwrap().overview().publications, 7);
}

#[test]
fn rejected_lines_make_a_partial_run() {
    let work = tempfile::tempdir().unwrap();
    prepare(&fixture_dir(), work.path()).unwrap();
    let hub = open(work.path());
    let mut delta = lines("delta.jsonl");
    delta.push("{not json".into());
    let run = run_daily(&hub, &delta, &opts()).unwrap();
    assert_eq!(run.status, RunStatus::Partial);
    assert_eq!(run.ingest.n_rejected, 1);
    assert!(hub.snapshot().is_ok());
}

#[test]
fn empty_delta_publishes_an_empty_snapshot() {
    let work = tempfile::tempdir().unwrap();
    prepare(&fixture_dir(), work.path()).unwrap();
    let hub = open(work.path());
    let run = run_daily(&hub, &Vec::<String>::new(), &opts()).unwrap();
    assert_eq!(run.status, RunStatus::Succeeded);
    let snap = hub.snapshot().unwrap();
    assert_eq!(snap.overview(), Default::default());
    assert!(snap.growth(hub_core::insights::Granularity::Month).rows.is_empty());
}
