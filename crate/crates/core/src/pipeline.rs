//! The daily update: ingest, triage, topics, entities, Long COVID signals,
//! index, stats. Nothing becomes visible until every stage succeeds.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Serialize, Serializer};

use crate::corpus::{CitationRecord, IngestMode, IngestReport};
use crate::entities::annotate_record;
use crate::hub::{AnnotationSet, Hub, HubError, HubSnapshot, LongCovidFlag};
use crate::longcovid::Status;
use crate::search::DocAnnotations;
use crate::text::content_hash;
use crate::topics::annotate_topics;
use crate::triage::triage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Triage,
    Topics,
    Entities,
    Longcovid,
    Index,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Triage, Stage::Topics, Stage::Entities, Stage::Longcovid, Stage::Index, Stage::Stats];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Triage => "triage",
            Stage::Topics => "topics",
            Stage::Entities => "entities",
            Stage::Longcovid => "longcovid",
            Stage::Index => "index",
            Stage::Stats => "stats",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Succeeded,
    Failed(Stage),
    /// Published, but some input lines were rejected.
    Partial,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Succeeded => f.write_str("succeeded"),
            RunStatus::Failed(s) => write!(f, "failed({s})"),
            RunStatus::Partial => f.write_str("partial"),
        }
    }
}

impl Serialize for RunStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub input: usize,
    pub output: usize,
    pub errors: usize,
    pub duration_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub stages: Vec<StageReport>,
    pub status: RunStatus,
    /// Snapshot serving after the run.
    pub snapshot_id: Option<String>,
    pub ingest: IngestReport,
}

impl PipelineRun {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn summary_line(&self) -> String {
        let counts: Vec<String> = self.stages.iter().map(|s| format!("{}={}/{}", s.stage, s.input, s.output)).collect();
        format!("run={} status={} {}", self.run_id, self.status, counts.join(" "))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Ingest timestamp for new and updated records.
    pub now: DateTime<Utc>,
    /// Makes the named stage fail before it does any work.
    pub inject_failure: Option<Stage>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { now: Utc::now(), inject_failure: None }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {cause}")]
pub struct StageFailure {
    pub stage: Stage,
    pub cause: String,
}

fn fail(stage: Stage, cause: impl fmt::Display) -> StageFailure {
    StageFailure { stage, cause: cause.to_string() }
}

/// Maps `f` over `items` on scoped threads, keeping order.
fn par_map<T: Sync, U: Send, E: Send>(items: &[T], f: impl Fn(&T) -> Result<U, E> + Sync) -> Result<Vec<U>, E> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    if items.len() < 64 || threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<U>, E>>())).collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("pipeline worker panicked")?);
        }
        Ok(out)
    })
}

struct Staged {
    snapshot: HubSnapshot,
    new_members: Vec<CitationRecord>,
}

struct Runner<'a> {
    hub: &'a Hub,
    opts: &'a RunOptions,
    stages: Vec<StageReport>,
}

impl Runner<'_> {
    fn stage<T>(
        &mut self,
        stage: Stage,
        input: usize,
        body: impl FnOnce() -> Result<(T, usize, usize), StageFailure>,
    ) -> Result<T, StageFailure> {
        let t = Instant::now();
        let result =
            if self.opts.inject_failure == Some(stage) { Err(fail(stage, "injected failure")) } else { body() };
        let duration_ms = t.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok((v, output, errors)) => {
                self.stages.push(StageReport { stage, input, output, errors, duration_ms, message: None });
                Ok(v)
            }
            Err(e) => {
                self.stages.push(StageReport {
                    stage,
                    input,
                    output: 0,
                    errors: 1,
                    duration_ms,
                    message: Some(e.cause.clone()),
                });
                Err(e)
            }
        }
    }
}

/// Runs every stage on `lines` and publishes the result. Stage failures are
/// reported in the returned run, with the previous snapshot left serving.
pub fn run_daily<S: AsRef<str>>(hub: &Hub, lines: &[S], opts: &RunOptions) -> Result<PipelineRun, HubError> {
    let _guard = hub.run_lock.try_lock().map_err(|_| HubError::Busy)?;
    let lock = OpenOptions::new().create(true).truncate(false).write(true).open(hub.dir().join(".pipeline.lock"))?;
    lock.try_lock().map_err(|_| HubError::Busy)?;

    let started = Utc::now();
    let run_id =
        format!("{}-{}", started.format("%Y%m%dT%H%M%S%.3fZ"), &content_hash(lines.iter().map(|l| l.as_ref()))[..8]);
    let mut runner = Runner { hub, opts, stages: Vec::new() };
    let staged_batch = hub.store().stage_batch(lines, IngestMode::CreateOrUpdate, opts.now);
    let ingest = staged_batch.report.clone();
    let outcome = build(&mut runner, lines.len(), staged_batch.changed_records()).and_then(|staged| {
        publish(hub, staged_batch, staged).map_err(|e| fail(Stage::Stats, format!("publication failed: {e}")))
    });
    let status = match &outcome {
        Err(e) => RunStatus::Failed(e.stage),
        Ok(()) if ingest.n_rejected > 0 => RunStatus::Partial,
        Ok(()) => RunStatus::Succeeded,
    };
    if let Err(e) = &outcome {
        log::error!("{e}");
    }
    let run = PipelineRun {
        run_id,
        started,
        finished: Utc::now(),
        stages: runner.stages,
        status,
        snapshot_id: hub.try_snapshot().map(|s| s.id.clone()),
        ingest,
    };
    write_report(hub, &run)?;
    Ok(run)
}

fn build(r: &mut Runner<'_>, n_lines: usize, staged: &[CitationRecord]) -> Result<Staged, StageFailure> {
    let hub = r.hub;
    let models = hub.models();
    let prev = hub.try_snapshot();
    let store = hub.store().snapshot();

    // Staged records plus anything committed to the store but never
    // annotated (an interrupted earlier run).
    let changed: Vec<CitationRecord> = r.stage(Stage::Ingest, n_lines, || {
        let mut out: BTreeMap<u64, CitationRecord> = staged.iter().map(|c| (c.pmid, c.clone())).collect();
        for rec in store.iter() {
            let known = prev.as_ref().is_some_and(|p| p.annotations.contains_key(&rec.pmid));
            if !known && !out.contains_key(&rec.pmid) {
                out.insert(rec.pmid, rec.clone());
            }
        }
        let n = out.len();
        Ok((out.into_values().collect(), n, 0))
    })?;

    let triaged = r.stage(Stage::Triage, changed.len(), || {
        if changed.is_empty() {
            return Ok((Vec::new(), 0, 0));
        }
        let model = models.triage.as_deref().ok_or_else(|| fail(Stage::Triage, "no triage model configured"))?;
        let decisions =
            par_map(&changed, |rec| triage(rec, Some(model), &models.rules)).map_err(|e| fail(Stage::Triage, e))?;
        let n = decisions.iter().filter(|d| d.relevant).count();
        Ok((decisions, n, 0))
    })?;
    let relevant: Vec<&CitationRecord> =
        changed.iter().zip(&triaged).filter(|(_, d)| d.relevant).map(|(c, _)| c).collect();

    let topics = r.stage(Stage::Topics, relevant.len(), || {
        if relevant.is_empty() {
            return Ok((Vec::new(), 0, 0));
        }
        let model = models.topics.as_deref().ok_or_else(|| fail(Stage::Topics, "no topic model configured"))?;
        let out = par_map(&relevant, |rec| annotate_topics(rec, Some(model))).map_err(|e| fail(Stage::Topics, e))?;
        let n = out.len();
        Ok((out, n, 0))
    })?;

    let entities = r.stage(Stage::Entities, topics.len(), || {
        if relevant.is_empty() {
            return Ok((Vec::new(), 0, 0));
        }
        let lexicon = models.lexicon.as_deref().ok_or_else(|| fail(Stage::Entities, "no lexicon configured"))?;
        let out = par_map(&relevant, |rec| {
            let drugs = models.drugs.get(&rec.pmid).cloned().unwrap_or_default();
            Ok::<_, StageFailure>((annotate_record(rec, lexicon), drugs))
        })?;
        let n = out.len();
        Ok((out, n, 0))
    })?;

    let mut annotations: BTreeMap<u64, AnnotationSet> =
        prev.as_ref().map(|p| p.annotations.clone()).unwrap_or_default();
    let mut topics_iter = topics.into_iter();
    let mut entities_iter = entities.into_iter();
    for (rec, decision) in changed.iter().zip(triaged) {
        let mut a = AnnotationSet {
            pmid: rec.pmid,
            triage: decision,
            topics: None,
            mentions: Vec::new(),
            drugs: Vec::new(),
            longcovid: None,
        };
        if a.triage.relevant {
            a.topics = topics_iter.next();
            (a.mentions, a.drugs) = entities_iter.next().expect("one entity result per relevant record");
        }
        annotations.insert(rec.pmid, a);
    }

    // Flags for the whole collection: review state can move between runs.
    let lc = hub.longcovid().snapshot();
    let auto = models.auto_include;
    let n_changed_relevant = relevant.len();
    r.stage(Stage::Longcovid, n_changed_relevant, || {
        let members: Vec<u64> = annotations.values().filter(|a| a.relevant()).map(|a| a.pmid).collect();
        let lookup = |pmid: u64| -> Result<Option<LongCovidFlag>, StageFailure> {
            if let Some(item) = lc.item(pmid) {
                return Ok(Some(LongCovidFlag {
                    p: item.p,
                    status: item.status,
                    provisional: item.status == Status::Pending && item.p >= auto,
                }));
            }
            let rec = match changed.iter().find(|c| c.pmid == pmid) {
                Some(c) => c,
                None => store.get(pmid).ok_or_else(|| fail(Stage::Longcovid, format!("pmid {pmid} missing")))?,
            };
            let (_, p) = lc.predict(rec).map_err(|e| fail(Stage::Longcovid, e))?;
            Ok(Some(LongCovidFlag { p, status: Status::Pending, provisional: p >= auto }))
        };
        let flags = par_map(&members, |p| lookup(*p))?;
        for (pmid, flag) in members.iter().zip(flags) {
            annotations.get_mut(pmid).expect("member").longcovid = flag;
        }
        Ok(((), n_changed_relevant, 0))
    })?;

    let index = r.stage(Stage::Index, n_changed_relevant, || {
        let base = prev.as_ref().map(|p| p.index.clone()).unwrap_or_default();
        let dropped: Vec<u64> = changed
            .iter()
            .filter(|c| annotations.get(&c.pmid).is_some_and(|a| !a.relevant()))
            .map(|c| c.pmid)
            .collect();
        let base = base.without(dropped);
        // Changed records plus members whose facets moved.
        let mut facets: BTreeMap<u64, DocAnnotations> = BTreeMap::new();
        for a in annotations.values().filter(|a| a.relevant()) {
            let next = a.doc_annotations();
            if base.doc(a.pmid).is_none_or(|d| d.annotations != next) {
                facets.insert(a.pmid, next);
            }
        }
        let recs: Vec<&CitationRecord> = relevant.to_vec();
        let index = base.update(recs, &facets).map_err(|e| fail(Stage::Index, e))?;
        Ok((index, n_changed_relevant, 0))
    })?;

    let topic_names = models.topic_names();
    let snapshot = r.stage(Stage::Stats, n_changed_relevant, || {
        // The snapshot is assembled over the store as it will be after commit.
        let snap = HubSnapshot::assemble(Arc::new(store.preview(staged)), annotations, index, topic_names)
            .map_err(|e| fail(Stage::Stats, e))?;
        Ok((snap, n_changed_relevant, 0))
    })?;

    let new_members = relevant.into_iter().cloned().collect();
    Ok(Staged { snapshot, new_members })
}

fn publish(hub: &Hub, batch: crate::corpus::StagedBatch, staged: Staged) -> Result<(), HubError> {
    let Staged { mut snapshot, new_members } = staged;
    let unchanged = hub.try_snapshot().is_some_and(|p| p.id == snapshot.id) && batch.changed_records().is_empty();
    if unchanged {
        return Ok(());
    }
    snapshot.write_files(hub.dir())?;
    hub.store().commit(batch)?;
    snapshot.store = hub.store().snapshot();
    let tmp = hub.dir().join("CURRENT.tmp");
    {
        let mut f = File::create(&tmp)?;
        writeln!(f, "{}", snapshot.id)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, hub.dir().join("CURRENT"))?;
    let id = snapshot.id.clone();
    let prev = hub.try_snapshot().map(|p| p.id.clone());
    hub.swap(Arc::new(snapshot));
    hub.longcovid().add_records(new_members);
    prune_snapshots(hub, &id, prev.as_deref())?;
    Ok(())
}

/// Keeps the live snapshot and its predecessor.
fn prune_snapshots(hub: &Hub, live: &str, prev: Option<&str>) -> Result<(), HubError> {
    for entry in fs::read_dir(hub.dir().join("snapshots"))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name != live && Some(name.as_str()) != prev && !name.starts_with('.') {
            fs::remove_dir_all(entry.path())?;
        }
    }
    Ok(())
}

fn write_report(hub: &Hub, run: &PipelineRun) -> Result<(), HubError> {
    let dir = hub.dir().join("runs");
    fs::create_dir_all(&dir)?;
    let mut f = File::create(dir.join(format!("{}.jsonl", run.run_id)))?;
    for s in &run.stages {
        let mut v = serde_json::to_value(s)?;
        v["kind"] = "stage".into();
        v["run_id"] = run.run_id.clone().into();
        writeln!(f, "{v}")?;
    }
    let mut v = serde_json::to_value(run)?;
    let obj = v.as_object_mut().expect("run serializes to an object");
    obj.remove("stages");
    obj.insert("kind".into(), "run".into());
    obj.insert("started".into(), run.started.to_rfc3339_opts(SecondsFormat::Millis, true).into());
    obj.insert("finished".into(), run.finished.to_rfc3339_opts(SecondsFormat::Millis, true).into());
    writeln!(f, "{v}")?;
    f.sync_all()?;
    Ok(())
}
