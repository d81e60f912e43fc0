//! Citation records and the on-disk corpus store.
//!
//! Records arrive as JSON lines (one flat object per line). The store keeps a
//! pmid-indexed map in memory and persists every committed batch to an
//! append-only log. A batch becomes visible to readers, and durable on disk,
//! only when its commit marker is written; a torn tail is discarded at open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::text::content_hash;

const LOG_FILE: &str = "corpus.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("missing field: {0}")]
    MissingField(&'static str),
    #[error("bad date: {0:?}")]
    BadDate(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("pmid {0} not found")]
    NotFound(u64),
    #[error("corrupt store log at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    pub pmid: u64,
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub journal: String,
    pub pub_date: NaiveDate,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub mesh_terms: Vec<String>,
    #[serde(default)]
    pub funding_text: String,
    #[serde(default)]
    pub country: String,
    /// Stamped by the store when the record is first committed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingested_at: Option<DateTime<Utc>>,
}

impl CitationRecord {
    /// Minimal record, mostly for tests and fixtures.
    pub fn new(pmid: u64, title: &str, abstract_text: &str, pub_date: NaiveDate) -> Self {
        CitationRecord {
            pmid,
            title: title.to_string(),
            abstract_text: abstract_text.to_string(),
            journal: String::new(),
            pub_date,
            authors: Vec::new(),
            keywords: Vec::new(),
            mesh_terms: Vec::new(),
            funding_text: String::new(),
            country: String::new(),
            ingested_at: None,
        }
    }

    /// Title and abstract joined, as seen by classifiers and the index.
    pub fn text(&self) -> String {
        if self.abstract_text.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.abstract_text)
        }
    }

    /// Hash over the fields that define "same content" for deduplication.
    pub fn content_hash(&self) -> String {
        let date = self.pub_date.format("%Y-%m-%d").to_string();
        content_hash([self.title.as_str(), self.abstract_text.as_str(), self.journal.as_str(), date.as_str()])
    }

    /// Serializes to the corpus line format.
    pub fn to_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("pmid".into(), Value::from(self.pmid));
        obj.insert("title".into(), Value::from(self.title.clone()));
        obj.insert("abstract".into(), Value::from(self.abstract_text.clone()));
        obj.insert("journal".into(), Value::from(self.journal.clone()));
        obj.insert("pub_date".into(), Value::from(self.pub_date.format("%Y-%m-%d").to_string()));
        obj.insert("authors".into(), Value::from(self.authors.clone()));
        obj.insert("keywords".into(), Value::from(self.keywords.clone()));
        obj.insert("mesh_terms".into(), Value::from(self.mesh_terms.clone()));
        obj.insert("funding_text".into(), Value::from(self.funding_text.clone()));
        obj.insert("country".into(), Value::from(self.country.clone()));
        if let Some(ts) = self.ingested_at {
            obj.insert("ingested_at".into(), Value::from(ts.to_rfc3339()));
        }
        Value::Object(obj).to_string()
    }
}

/// Parses `YYYY-MM-DD` or `YYYY-MM` (day defaults to 01).
pub fn parse_pub_date(s: &str) -> Result<NaiveDate, ParseError> {
    let s = s.trim();
    let bad = || ParseError::BadDate(s.to_string());
    let parts: Vec<&str> = s.split('-').collect();
    let num = |p: &str| -> Result<u32, ParseError> {
        if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        p.parse().map_err(|_| bad())
    };
    let (y, m, d) = match parts.as_slice() {
        [y, m] if y.len() == 4 && m.len() == 2 => (num(y)?, num(m)?, 1),
        [y, m, d] if y.len() == 4 && m.len() == 2 && d.len() == 2 => (num(y)?, num(m)?, num(d)?),
        _ => return Err(bad()),
    };
    NaiveDate::from_ymd_opt(y as i32, m, d).ok_or_else(bad)
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(ParseError::MalformedLine(format!("{key} must be a string, got {other}"))),
    }
}

fn list_field(obj: &Map<String, Value>, key: &str) -> Result<Vec<String>, ParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(ParseError::MalformedLine(format!("{key} entries must be strings, got {other}"))),
            })
            .collect(),
        Some(other) => Err(ParseError::MalformedLine(format!("{key} must be a list, got {other}"))),
    }
}

/// Reads a whole record file, skipping blank lines. Fails on the first bad
/// line.
pub fn read_records<R: std::io::BufRead>(r: R) -> Result<Vec<CitationRecord>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line).map_err(|source| StoreError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Parses one corpus line. Unknown keys are ignored.
pub fn parse_record(line: &str) -> Result<CitationRecord, ParseError> {
    let value: Value = serde_json::from_str(line.trim()).map_err(|e| ParseError::MalformedLine(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ParseError::MalformedLine("expected a JSON object".into()));
    };
    let pmid = match obj.get("pmid") {
        None | Some(Value::Null) => return Err(ParseError::MissingField("pmid")),
        Some(v) => v
            .as_u64()
            .filter(|p| *p > 0)
            .ok_or_else(|| ParseError::MalformedLine(format!("pmid must be a positive integer, got {v}")))?,
    };
    let title = string_field(&obj, "title")?;
    if title.trim().is_empty() {
        return Err(ParseError::MissingField("title"));
    }
    let pub_date = match obj.get("pub_date") {
        None | Some(Value::Null) => return Err(ParseError::MissingField("pub_date")),
        Some(Value::String(s)) if s.trim().is_empty() => return Err(ParseError::MissingField("pub_date")),
        Some(Value::String(s)) => parse_pub_date(s)?,
        Some(other) => return Err(ParseError::BadDate(other.to_string())),
    };
    let ingested_at = match obj.get("ingested_at") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            Some(DateTime::parse_from_rfc3339(s).map_err(|_| ParseError::BadDate(s.clone()))?.with_timezone(&Utc))
        }
        Some(other) => return Err(ParseError::BadDate(other.to_string())),
    };
    Ok(CitationRecord {
        pmid,
        title,
        abstract_text: string_field(&obj, "abstract")?,
        journal: string_field(&obj, "journal")?,
        pub_date,
        authors: list_field(&obj, "authors")?,
        keywords: list_field(&obj, "keywords")?,
        mesh_terms: list_field(&obj, "mesh_terms")?,
        funding_text: string_field(&obj, "funding_text")?,
        country: string_field(&obj, "country")?,
        ingested_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    /// Insert new pmids, replace changed ones.
    #[default]
    CreateOrUpdate,
    /// Insert new pmids; changed content for a known pmid is rejected.
    CreateOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct IngestReport {
    pub n_new: usize,
    pub n_duplicate: usize,
    pub n_updated: usize,
    pub n_rejected: usize,
    /// 1-based line number and reason.
    pub rejects: Vec<(usize, String)>,
    /// Accepted lines that deserve attention (future publication dates).
    pub warnings: Vec<(usize, String)>,
    /// New and updated pmids, in input order. Downstream stages consume this.
    pub changed: Vec<u64>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.n_new + self.n_duplicate + self.n_updated + self.n_rejected
    }

    pub fn summary_line(&self) -> String {
        format!(
            "new={} duplicate={} updated={} rejected={}",
            self.n_new, self.n_duplicate, self.n_updated, self.n_rejected
        )
    }
}

/// A batch that has been validated against the store but not yet committed.
#[derive(Debug, Clone)]
pub struct StagedBatch {
    pub report: IngestReport,
    records: Vec<CitationRecord>,
    base_version: u64,
}

impl StagedBatch {
    /// Records that will be inserted or replaced, in input order.
    pub fn changed_records(&self) -> &[CitationRecord] {
        &self.records
    }
}

/// Immutable view of the store as of one committed batch.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    records: BTreeMap<u64, CitationRecord>,
    version: u64,
}

impl StoreSnapshot {
    pub fn get(&self, pmid: u64) -> Option<&CitationRecord> {
        self.records.get(&pmid)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Records in ascending pmid order.
    pub fn iter(&self) -> impl Iterator<Item = &CitationRecord> {
        self.records.values()
    }

    /// The snapshot that committing `records` on top of this one would
    /// produce.
    pub fn preview(&self, records: &[CitationRecord]) -> StoreSnapshot {
        if records.is_empty() {
            return self.clone();
        }
        let mut next = StoreSnapshot { records: self.records.clone(), version: self.version + 1 };
        for r in records {
            next.records.insert(r.pmid, r.clone());
        }
        next
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordPage {
    pub total: usize,
    pub page: usize,
    pub records: Vec<CitationRecord>,
}

/// Single-writer, many-reader record store.
pub struct CorpusStore {
    dir: Option<PathBuf>,
    current: RwLock<Arc<StoreSnapshot>>,
    writer: Mutex<()>,
}

#[derive(Deserialize)]
struct ControlLine {
    op: String,
    #[serde(default)]
    pmid: Option<u64>,
}

impl CorpusStore {
    /// A store with no backing file.
    pub fn in_memory() -> Self {
        CorpusStore { dir: None, current: RwLock::new(Arc::default()), writer: Mutex::new(()) }
    }

    /// Opens (or creates) a store rooted at `dir`, replaying its log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| StoreError::StoreUnavailable(format!("{}: {e}", dir.display())))?;
        let path = dir.join(LOG_FILE);
        let mut records = BTreeMap::new();
        let mut version = 0;
        if path.exists() {
            let (committed, committed_len) = replay_log(&path)?;
            records = committed.0;
            version = committed.1;
            let actual_len = fs::metadata(&path)?.len();
            if actual_len != committed_len {
                log::warn!("discarding {} bytes of uncommitted log tail", actual_len - committed_len);
                OpenOptions::new().write(true).open(&path)?.set_len(committed_len)?;
            }
        }
        Ok(CorpusStore {
            dir: Some(dir),
            current: RwLock::new(Arc::new(StoreSnapshot { records, version })),
            writer: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.current.read().expect("store lock poisoned").clone()
    }

    pub fn get_record(&self, pmid: u64) -> Result<CitationRecord, StoreError> {
        self.snapshot().get(pmid).cloned().ok_or(StoreError::NotFound(pmid))
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot().is_empty()
    }

    /// Records with `from <= pub_date <= to`, newest first then by pmid,
    /// paged with 1-based `page`.
    pub fn list_records(&self, from: NaiveDate, to: NaiveDate, page: usize, size: usize) -> RecordPage {
        let snap = self.snapshot();
        let mut hits: Vec<&CitationRecord> = snap.iter().filter(|r| r.pub_date >= from && r.pub_date <= to).collect();
        hits.sort_by(|a, b| b.pub_date.cmp(&a.pub_date).then(a.pmid.cmp(&b.pmid)));
        let total = hits.len();
        let page = page.max(1);
        let records = hits.into_iter().skip((page - 1) * size).take(size).cloned().collect();
        RecordPage { total, page, records }
    }

    /// Validates `lines` against the current snapshot without committing.
    pub fn stage_batch<S: AsRef<str>>(&self, lines: &[S], mode: IngestMode, now: DateTime<Utc>) -> StagedBatch {
        let snap = self.snapshot();
        let mut report = IngestReport::default();
        let mut staged: BTreeMap<u64, CitationRecord> = BTreeMap::new();
        let mut order = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            let line_no = i + 1;
            let line = line.as_ref();
            if line.trim().is_empty() {
                report.n_rejected += 1;
                report.rejects.push((line_no, "empty line".into()));
                continue;
            }
            let mut record = match parse_record(line) {
                Ok(r) => r,
                Err(e) => {
                    report.n_rejected += 1;
                    report.rejects.push((line_no, e.to_string()));
                    continue;
                }
            };
            if record.pub_date > now.date_naive() {
                report.warnings.push((line_no, format!("pub_date {} is in the future", record.pub_date)));
            }
            let existing = staged.get(&record.pmid).or_else(|| snap.get(record.pmid));
            match existing {
                Some(old) if old.content_hash() == record.content_hash() => {
                    report.n_duplicate += 1;
                }
                Some(_) if mode == IngestMode::CreateOnly => {
                    report.n_rejected += 1;
                    report.rejects.push((line_no, format!("pmid {} already exists", record.pmid)));
                }
                Some(_) => {
                    report.n_updated += 1;
                    record.ingested_at = Some(now);
                    if !order.contains(&record.pmid) {
                        order.push(record.pmid);
                    }
                    staged.insert(record.pmid, record);
                }
                None => {
                    report.n_new += 1;
                    record.ingested_at = Some(now);
                    order.push(record.pmid);
                    staged.insert(record.pmid, record);
                }
            }
        }
        report.changed = order.clone();
        let records = order.iter().map(|p| staged.remove(p).expect("staged pmid")).collect();
        StagedBatch { report, records, base_version: snap.version }
    }

    /// Commits a staged batch atomically. Fails if another batch was committed
    /// after staging.
    pub fn commit(&self, batch: StagedBatch) -> Result<IngestReport, StoreError> {
        let _guard = self.writer.lock().map_err(|_| StoreError::StoreUnavailable("writer lock poisoned".into()))?;
        let snap = self.snapshot();
        if snap.version != batch.base_version {
            return Err(StoreError::StoreUnavailable("store changed since batch was staged".into()));
        }
        if batch.records.is_empty() {
            return Ok(batch.report);
        }
        let version = snap.version + 1;
        if let Some(dir) = &self.dir {
            let mut buf = String::new();
            for r in &batch.records {
                buf.push_str(&r.to_line());
                buf.push('\n');
            }
            buf.push_str(&format!("{{\"op\":\"commit\",\"batch\":{version}}}\n"));
            append_durably(&dir.join(LOG_FILE), buf.as_bytes())?;
        }
        let mut records = snap.records.clone();
        for r in batch.records {
            records.insert(r.pmid, r);
        }
        *self.current.write().expect("store lock poisoned") = Arc::new(StoreSnapshot { records, version });
        Ok(batch.report)
    }

    pub fn ingest_batch<S: AsRef<str>>(&self, lines: &[S], mode: IngestMode) -> Result<IngestReport, StoreError> {
        self.ingest_batch_at(lines, mode, Utc::now())
    }

    pub fn ingest_batch_at<S: AsRef<str>>(
        &self,
        lines: &[S],
        mode: IngestMode,
        now: DateTime<Utc>,
    ) -> Result<IngestReport, StoreError> {
        let staged = self.stage_batch(lines, mode, now);
        self.commit(staged)
    }

    /// Removes a record. No retraction policy is applied automatically.
    pub fn delete(&self, pmid: u64) -> Result<CitationRecord, StoreError> {
        let _guard = self.writer.lock().map_err(|_| StoreError::StoreUnavailable("writer lock poisoned".into()))?;
        let snap = self.snapshot();
        let removed = snap.get(pmid).cloned().ok_or(StoreError::NotFound(pmid))?;
        let version = snap.version + 1;
        if let Some(dir) = &self.dir {
            let buf = format!("{{\"op\":\"delete\",\"pmid\":{pmid}}}\n{{\"op\":\"commit\",\"batch\":{version}}}\n");
            append_durably(&dir.join(LOG_FILE), buf.as_bytes())?;
        }
        let mut records = snap.records.clone();
        records.remove(&pmid);
        *self.current.write().expect("store lock poisoned") = Arc::new(StoreSnapshot { records, version });
        Ok(removed)
    }
}

fn append_durably(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| StoreError::StoreUnavailable(format!("{}: {e}", path.display())))?;
    file.write_all(bytes)?;
    file.sync_data()?;
    Ok(())
}

type Replayed = ((BTreeMap<u64, CitationRecord>, u64), u64);

fn replay_log(path: &Path) -> Result<Replayed, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut committed = BTreeMap::new();
    let mut version = 0;
    let mut committed_len = 0u64;
    let mut offset = 0u64;
    let mut pending_puts: Vec<CitationRecord> = Vec::new();
    let mut pending_deletes: Vec<u64> = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let bytes = line?;
        offset += bytes.len() as u64 + 1;
        let Ok(text) = std::str::from_utf8(&bytes) else {
            break;
        };
        if text.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| StoreError::Corrupt { line: i + 1, reason };
        if let Ok(ctrl) = serde_json::from_str::<ControlLine>(text) {
            match ctrl.op.as_str() {
                "commit" => {
                    for r in pending_puts.drain(..) {
                        committed.insert(r.pmid, r);
                    }
                    for p in pending_deletes.drain(..) {
                        committed.remove(&p);
                    }
                    version += 1;
                    committed_len = offset;
                }
                "delete" => pending_deletes.push(ctrl.pmid.ok_or_else(|| corrupt("delete without pmid".into()))?),
                other => return Err(corrupt(format!("unknown op {other:?}"))),
            }
            continue;
        }
        match parse_record(text) {
            Ok(r) => pending_puts.push(r),
            // A torn final line is expected after a crash; anything later is not.
            Err(_) => break,
        }
    }
    Ok(((committed, version), committed_len))
}
