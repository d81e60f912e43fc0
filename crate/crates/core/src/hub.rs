//! Application state shared by the HTTP service and the CLI.
//!
//! A [`Hub`] owns the record store, the Long COVID loop and the currently
//! published [`HubSnapshot`]. Snapshots are immutable; the pipeline builds a
//! new one and swaps it in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CitationRecord, CorpusStore, StoreError, StoreSnapshot};
use crate::entities::{read_mentions, EntityMention, Lexicon, LexiconError, TermList};
use crate::export::{jsonl_line, write_csv};
use crate::insights::{
    cooccurrence, growth, read_baseline, read_trending, share_ratio, trending, CooccurrenceMatrix, Granularity,
    GrowthSeries, InsightsError, ShareRow, TrendingItem,
};
use crate::longcovid::{
    read_seeds, Label, LoopError, LoopHyper, ReviewItem, SharedLoop, SignalVector, Status, AUTO_INCLUDE_THRESHOLD,
};
use crate::search::{DocAnnotations, FacetQuery, Index, SearchError, SearchResult, Sort};
use crate::topics::{topic_distribution, MultiLabelModel, TopicError, TopicScore, DEFAULT_TOPICS};
use crate::triage::{KeywordRules, LinearModel, TriageDecision, TriageError, DEFAULT_KEYWORDS};

pub const DATA_DIR_ENV: &str = "HUB_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "hub-data";

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error("config: {0}")]
    Config(String),
    #[error("no snapshot has been published yet")]
    NoSnapshot,
    #[error("pmid {0} is not in the collection")]
    NotFound(u64),
    #[error("another pipeline run holds the lock")]
    Busy,
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Insights(#[from] InsightsError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Declarative hub configuration. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubConfig {
    pub data_dir: Option<PathBuf>,
    pub triage_model: Option<PathBuf>,
    pub topic_model: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Externally produced drug mentions in the mention TSV shape.
    pub drug_mentions: Option<PathBuf>,
    pub longcovid_synonyms: Option<PathBuf>,
    pub symptoms: Option<PathBuf>,
    pub longcovid_seeds: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub trending: Option<PathBuf>,
    pub keywords: Option<Vec<String>>,
    pub triage_threshold: Option<f64>,
    pub auto_include_threshold: Option<f64>,
}

impl HubConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HubError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HubError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, HubError> {
        let mut c: HubConfig = toml::from_str(text).map_err(|e| HubError::Config(e.to_string()))?;
        for p in [
            &mut c.data_dir,
            &mut c.triage_model,
            &mut c.topic_model,
            &mut c.lexicon,
            &mut c.drug_mentions,
            &mut c.longcovid_synonyms,
            &mut c.symptoms,
            &mut c.longcovid_seeds,
            &mut c.baseline,
            &mut c.trending,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// `HUB_DATA_DIR`, else the configured directory, else `./hub-data`.
    pub fn data_dir(&self) -> PathBuf {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.data_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
        }
    }
}

/// Models, lexicons and side files loaded from a config.
#[derive(Debug, Clone)]
pub struct Models {
    pub triage: Option<Arc<LinearModel>>,
    pub topics: Option<Arc<MultiLabelModel>>,
    pub lexicon: Option<Arc<Lexicon>>,
    pub drugs: Arc<BTreeMap<u64, Vec<EntityMention>>>,
    pub rules: KeywordRules,
    pub synonyms: Option<TermList>,
    pub symptoms: Option<TermList>,
    pub seeds: BTreeMap<u64, bool>,
    pub baseline: Option<BTreeMap<String, u64>>,
    pub trending: Vec<(u64, f64)>,
    pub auto_include: f64,
    pub loop_hyper: LoopHyper,
}

impl Default for Models {
    fn default() -> Self {
        Models {
            triage: None,
            topics: None,
            lexicon: None,
            drugs: Arc::default(),
            rules: KeywordRules::new(DEFAULT_KEYWORDS).expect("default keywords are valid"),
            synonyms: None,
            symptoms: None,
            seeds: BTreeMap::new(),
            baseline: None,
            trending: Vec::new(),
            auto_include: AUTO_INCLUDE_THRESHOLD,
            loop_hyper: LoopHyper::default(),
        }
    }
}

fn reader(path: &Path) -> Result<BufReader<File>, HubError> {
    File::open(path).map(BufReader::new).map_err(|e| HubError::Config(format!("{}: {e}", path.display())))
}

impl Models {
    pub fn load(c: &HubConfig) -> Result<Self, HubError> {
        let mut m = Models::default();
        if let Some(p) = &c.triage_model {
            let mut model = LinearModel::read(reader(p)?)?;
            if let Some(t) = c.triage_threshold {
                if !(t > 0.0 && t < 1.0) {
                    return Err(HubError::Config(format!("triage_threshold {t} outside (0, 1)")));
                }
                model.threshold = t;
            }
            m.triage = Some(Arc::new(model));
        }
        if let Some(p) = &c.topic_model {
            m.topics = Some(Arc::new(MultiLabelModel::read(reader(p)?)?));
        }
        if let Some(p) = &c.lexicon {
            m.lexicon = Some(Arc::new(Lexicon::parse(reader(p)?)?));
        }
        if let Some(p) = &c.drug_mentions {
            let mut drugs: BTreeMap<u64, Vec<EntityMention>> = BTreeMap::new();
            for d in read_mentions(reader(p)?)? {
                drugs.entry(d.pmid).or_default().push(d);
            }
            m.drugs = Arc::new(drugs);
        }
        if let Some(k) = &c.keywords {
            m.rules = KeywordRules::new(k)?;
        }
        if let Some(p) = &c.longcovid_synonyms {
            m.synonyms = Some(TermList::parse(reader(p)?)?);
        }
        if let Some(p) = &c.symptoms {
            m.symptoms = Some(TermList::parse(reader(p)?)?);
        }
        if let Some(p) = &c.longcovid_seeds {
            m.seeds = read_seeds(reader(p)?)?;
        }
        if let Some(p) = &c.baseline {
            m.baseline = Some(read_baseline(reader(p)?)?);
        }
        if let Some(p) = &c.trending {
            m.trending = read_trending(reader(p)?)?;
        }
        if let Some(t) = c.auto_include_threshold {
            m.auto_include = t;
        }
        Ok(m)
    }

    pub fn topic_names(&self) -> Vec<String> {
        match &self.topics {
            Some(m) => m.topics.names().to_vec(),
            None => DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub(crate) fn loop_resources(&self) -> crate::longcovid::Resources {
        crate::longcovid::Resources::new(self.synonyms.clone(), self.symptoms.clone(), self.triage.as_deref().cloned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongCovidFlag {
    pub p: f64,
    pub status: Status,
    pub provisional: bool,
}

/// Everything the pipeline attached to one triaged record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub pmid: u64,
    pub triage: TriageDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<crate::topics::TopicAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<EntityMention>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drugs: Vec<EntityMention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longcovid: Option<LongCovidFlag>,
}

impl AnnotationSet {
    pub fn relevant(&self) -> bool {
        self.triage.relevant
    }

    /// Facet values for the search index.
    pub fn doc_annotations(&self) -> DocAnnotations {
        let concepts = |ty: &str| -> BTreeSet<String> {
            self.mentions.iter().filter(|m| m.entity_type == ty).map(|m| m.concept_id.clone()).collect()
        };
        DocAnnotations {
            topics: self.topics.iter().flat_map(|t| t.assigned.iter().cloned()).collect(),
            variants: concepts("strain"),
            vaccines: concepts("vaccine"),
            drugs: self.drugs.iter().map(|m| m.concept_id.clone()).collect(),
            provisional: self.longcovid.is_some_and(|f| f.provisional),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Overview {
    pub publications: usize,
    pub journals: usize,
    pub topics: usize,
}

/// Precomputed dashboard numbers for one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub overview: Overview,
    pub growth_monthly: GrowthSeries,
    pub cooccurrence: CooccurrenceMatrix,
    /// `topics_per_article[n]` = articles with n assigned topics.
    pub topics_per_article: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    id: String,
    store_version: u64,
    documents: usize,
    topics: Vec<String>,
}

/// One published, immutable state of the collection.
#[derive(Debug, Clone)]
pub struct HubSnapshot {
    pub id: String,
    pub store: Arc<StoreSnapshot>,
    /// Every triaged record, relevant or not.
    pub annotations: BTreeMap<u64, AnnotationSet>,
    pub index: Index,
    pub topics: Vec<String>,
    pub stats: Stats,
}

/// Article view returned by the document endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocView {
    pub record: CitationRecord,
    pub facets: DocAnnotations,
    pub triage: TriageDecision,
    pub topic_scores: Vec<TopicScore>,
    pub mentions: Vec<EntityMention>,
    pub drugs: Vec<EntityMention>,
    pub longcovid: Option<LongCovidFlag>,
}

impl HubSnapshot {
    /// Builds a snapshot and derives its id and stats.
    pub fn assemble(
        store: Arc<StoreSnapshot>,
        annotations: BTreeMap<u64, AnnotationSet>,
        index: Index,
        topics: Vec<String>,
    ) -> Result<Self, HubError> {
        let mut snap = HubSnapshot { id: String::new(), store, annotations, index, topics, stats: Stats::empty(&[]) };
        snap.stats = snap.compute_stats();
        snap.id = snap.content_id()?;
        Ok(snap)
    }

    pub fn empty(store: Arc<StoreSnapshot>, topics: Vec<String>) -> Self {
        HubSnapshot::assemble(store, BTreeMap::new(), Index::default(), topics).expect("empty snapshot serializes")
    }

    pub fn collection_ids(&self) -> BTreeSet<u64> {
        self.annotations.values().filter(|a| a.relevant()).map(|a| a.pmid).collect()
    }

    /// Collection records in pmid order.
    pub fn collection(&self) -> impl Iterator<Item = &CitationRecord> {
        self.annotations.values().filter(|a| a.relevant()).filter_map(|a| self.store.get(a.pmid))
    }

    pub fn annotation(&self, pmid: u64) -> Option<&AnnotationSet> {
        self.annotations.get(&pmid).filter(|a| a.relevant())
    }

    fn compute_stats(&self) -> Stats {
        let records: Vec<&CitationRecord> = self.collection().collect();
        let assigned: Vec<BTreeSet<String>> = self
            .annotations
            .values()
            .filter(|a| a.relevant())
            .map(|a| a.topics.iter().flat_map(|t| t.assigned.iter().cloned()).collect())
            .collect();
        let used: BTreeSet<&String> = assigned.iter().flatten().collect();
        Stats {
            overview: Overview {
                publications: records.len(),
                journals: records
                    .iter()
                    .map(|r| r.journal.as_str())
                    .filter(|j| !j.is_empty())
                    .collect::<BTreeSet<_>>()
                    .len(),
                topics: used.len(),
            },
            growth_monthly: growth(records.iter().map(|r| r.pub_date), Granularity::Month),
            cooccurrence: cooccurrence(assigned.iter(), &self.topics),
            topics_per_article: topic_distribution(&assigned, self.topics.len()),
        }
    }

    fn annotation_bytes(&self) -> Result<Vec<u8>, HubError> {
        let mut buf = Vec::new();
        for a in self.annotations.values() {
            serde_json::to_writer(&mut buf, a)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    fn index_bytes(&self) -> Result<Vec<u8>, HubError> {
        let mut buf = Vec::new();
        self.index.write_dump(&mut buf)?;
        Ok(buf)
    }

    fn content_id(&self) -> Result<String, HubError> {
        let mut h = Sha256::new();
        h.update(self.annotation_bytes()?);
        h.update(b"\x00");
        h.update(self.index_bytes()?);
        Ok(hex::encode(&h.finalize()[..8]))
    }

    pub fn overview(&self) -> Overview {
        self.stats.overview
    }

    pub fn search(&self, q: &FacetQuery) -> Result<SearchResult, SearchError> {
        self.index.search(q)
    }

    /// Every hit for `q` (paging ignored), newest first.
    pub fn export_ids(&self, q: &FacetQuery) -> Result<Vec<u64>, SearchError> {
        let q = FacetQuery { sort: Sort::DateDesc, page: 1, ..q.clone() };
        q.validate()?;
        Ok(self.index.ranked(&q)?.into_iter().map(|h| h.pmid).collect())
    }

    fn export_rows(&self, ids: &[u64]) -> Vec<(&CitationRecord, DocAnnotations)> {
        ids.iter().filter_map(|p| Some((self.store.get(*p)?, self.annotation(*p)?.doc_annotations()))).collect()
    }

    pub fn write_export_jsonl<W: Write>(&self, q: &FacetQuery, mut w: W) -> Result<usize, HubError> {
        let ids = self.export_ids(q)?;
        let rows = self.export_rows(&ids);
        for (r, a) in &rows {
            writeln!(w, "{}", jsonl_line(r, a))?;
        }
        Ok(rows.len())
    }

    pub fn write_export_csv<W: Write>(&self, q: &FacetQuery, w: W) -> Result<usize, HubError> {
        let ids = self.export_ids(q)?;
        let rows = self.export_rows(&ids);
        write_csv(w, rows.iter().map(|(r, a)| (*r, a)))?;
        Ok(rows.len())
    }

    pub fn doc(&self, pmid: u64) -> Option<DocView> {
        let a = self.annotation(pmid)?;
        let record = self.store.get(pmid)?.clone();
        Some(DocView {
            record,
            facets: a.doc_annotations(),
            triage: a.triage.clone(),
            topic_scores: a.topics.as_ref().map(|t| t.scores.clone()).unwrap_or_default(),
            mentions: a.mentions.clone(),
            drugs: a.drugs.clone(),
            longcovid: a.longcovid,
        })
    }

    pub fn growth(&self, granularity: Granularity) -> GrowthSeries {
        growth(self.collection().map(|r| r.pub_date), granularity)
    }

    pub fn cooccurrence(&self) -> &CooccurrenceMatrix {
        &self.stats.cooccurrence
    }

    pub fn trending(&self, external: &[(u64, f64)], n: usize) -> Vec<TrendingItem> {
        trending(&self.collection_ids(), external, n)
    }

    pub fn share_ratio(&self, baseline: &BTreeMap<String, u64>) -> Result<Vec<ShareRow>, InsightsError> {
        share_ratio(&self.growth(Granularity::Quarter), baseline)
    }

    /// Writes the snapshot under `root/snapshots/<id>/` and points
    /// `root/CURRENT` at it.
    pub(crate) fn write_files(&self, root: &Path) -> Result<PathBuf, HubError> {
        let dir = root.join("snapshots").join(&self.id);
        let tmp = root.join("snapshots").join(format!(".{}.tmp", self.id));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        fs::write(tmp.join("annotations.jsonl"), self.annotation_bytes()?)?;
        fs::write(tmp.join("index.jsonl"), self.index_bytes()?)?;
        fs::write(tmp.join("stats.json"), serde_json::to_vec_pretty(&self.stats)?)?;
        let manifest = Manifest {
            id: self.id.clone(),
            store_version: self.store.version(),
            documents: self.index.len(),
            topics: self.topics.clone(),
        };
        fs::write(tmp.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        for f in fs::read_dir(&tmp)? {
            File::open(f?.path())?.sync_all()?;
        }
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&tmp, &dir)?;
        Ok(dir)
    }

    /// Loads the snapshot `root/CURRENT` names, if any, against `store`.
    pub(crate) fn read_current(root: &Path, store: Arc<StoreSnapshot>) -> Result<Option<Self>, HubError> {
        let current = root.join("CURRENT");
        if !current.exists() {
            return Ok(None);
        }
        let id = fs::read_to_string(&current)?.trim().to_string();
        let dir = root.join("snapshots").join(&id);
        let manifest: Manifest = serde_json::from_reader(reader(&dir.join("manifest.json"))?)?;
        let mut annotations = BTreeMap::new();
        for line in reader(&dir.join("annotations.jsonl"))?.lines() {
            let a: AnnotationSet = serde_json::from_str(&line?)?;
            annotations.insert(a.pmid, a);
        }
        let facets: BTreeMap<u64, DocAnnotations> =
            annotations.values().filter(|a| a.relevant()).map(|a| (a.pmid, a.doc_annotations())).collect();
        let records: Vec<&CitationRecord> = facets.keys().filter_map(|p| store.get(*p)).collect();
        if records.len() != facets.len() {
            return Err(HubError::Corrupt(format!("snapshot {id} names records missing from the store")));
        }
        let index = Index::build(records, &facets)?;
        let snap = HubSnapshot::assemble(store, annotations, index, manifest.topics)?;
        if snap.id != id {
            return Err(HubError::Corrupt(format!("snapshot {id} content hashes to {}", snap.id)));
        }
        Ok(Some(snap))
    }
}

impl Stats {
    fn empty(topics: &[String]) -> Self {
        Stats {
            overview: Overview::default(),
            growth_monthly: growth(std::iter::empty(), Granularity::Month),
            cooccurrence: cooccurrence(std::iter::empty::<&BTreeSet<String>>(), topics),
            topics_per_article: vec![0; topics.len() + 1],
        }
    }
}

/// Review queue entry with synonym offsets for highlighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub pmid: u64,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub journal: String,
    pub pub_date: chrono::NaiveDate,
    pub signals: SignalVector,
    pub p: f64,
    pub priority: f64,
    pub iteration: u32,
    pub title_synonyms: Vec<(usize, usize)>,
    pub abstract_synonyms: Vec<(usize, usize)>,
}

pub struct Hub {
    dir: PathBuf,
    models: Models,
    store: CorpusStore,
    longcovid: SharedLoop,
    current: RwLock<Option<Arc<HubSnapshot>>>,
    pub(crate) run_lock: Mutex<()>,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Hub {
    pub fn from_config(config: &HubConfig) -> Result<Self, HubError> {
        Hub::open(config.data_dir(), Models::load(config)?)
    }

    /// Opens the data directory: replays the store, loads the published
    /// snapshot and rebuilds the review loop over the collection.
    pub fn open(dir: impl AsRef<Path>, models: Models) -> Result<Self, HubError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let store = CorpusStore::open(dir.join("corpus"))?;
        let snap = HubSnapshot::read_current(&dir, store.snapshot())?;
        let pool: Vec<CitationRecord> = snap.iter().flat_map(|s| s.collection().cloned().collect::<Vec<_>>()).collect();
        let longcovid = SharedLoop::open(
            dir.join("longcovid"),
            pool,
            models.seeds.clone(),
            models.loop_resources(),
            models.loop_hyper,
        )?;
        Ok(Hub { dir, models, store, longcovid, current: RwLock::new(snap.map(Arc::new)), run_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    pub fn store(&self) -> &CorpusStore {
        &self.store
    }

    pub fn longcovid(&self) -> &SharedLoop {
        &self.longcovid
    }

    pub fn snapshot(&self) -> Result<Arc<HubSnapshot>, HubError> {
        self.current.read().expect("snapshot lock poisoned").clone().ok_or(HubError::NoSnapshot)
    }

    pub(crate) fn try_snapshot(&self) -> Option<Arc<HubSnapshot>> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    pub(crate) fn swap(&self, snap: Arc<HubSnapshot>) {
        *self.current.write().expect("snapshot lock poisoned") = Some(snap);
    }

    pub fn trending(&self, n: usize) -> Result<Vec<TrendingItem>, HubError> {
        Ok(self.snapshot()?.trending(&self.models.trending, n))
    }

    pub fn share_ratio(&self) -> Result<Vec<ShareRow>, HubError> {
        let baseline = self.models.baseline.as_ref().ok_or_else(|| HubError::Config("no baseline file".into()))?;
        Ok(self.snapshot()?.share_ratio(baseline)?)
    }

    pub fn queue_item(&self, item: &ReviewItem) -> Option<QueueItem> {
        let r = self.store.snapshot().get(item.pmid)?.clone();
        let spans = |t: &str| self.models.synonyms.as_ref().map(|s| s.char_spans(t)).unwrap_or_default();
        Some(QueueItem {
            pmid: r.pmid,
            title_synonyms: spans(&r.title),
            abstract_synonyms: spans(&r.abstract_text),
            title: r.title,
            abstract_text: r.abstract_text,
            journal: r.journal,
            pub_date: r.pub_date,
            signals: item.signals,
            p: item.p,
            priority: item.priority,
            iteration: item.iteration,
        })
    }

    /// The next `k` pending items, in `next_review_batch` order.
    pub fn review_queue(&self, k: usize) -> Vec<QueueItem> {
        self.longcovid.snapshot().next_review_batch(k).iter().filter_map(|i| self.queue_item(i)).collect()
    }

    pub fn decide(&self, pmid: u64, label: Label, curator: &str, at: DateTime<Utc>) -> Result<ReviewItem, HubError> {
        Ok(self.longcovid.decide(pmid, label, curator, at)?)
    }
}
