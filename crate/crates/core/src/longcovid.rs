//! Human-in-the-loop collection building for Long COVID.
//!
//! Every article gets eight signals, a meta-model turns them into a
//! probability, and curators review the most uncertain articles first. Each
//! iteration retrains the text sub-models, the journal prior and the
//! meta-model from seed labels plus the logged decisions.
//!
//! | signal | meaning |
//! |--------|---------|
//! | s1 | synonym mentions in title and abstract |
//! | s2 | 1 when the title mentions a synonym |
//! | s3 | triage relevance probability |
//! | s4 | unigram text model probability |
//! | s5 | bigram text model probability |
//! | s6 | symptom terms per 100 abstract tokens |
//! | s7 | temporal persistence cues |
//! | s8 | Laplace-smoothed journal positive rate |

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CitationRecord;
use crate::entities::{LexiconError, TermList};
use crate::linear::{sigmoid, train_joint, Hyper, LogisticHead, TrainError};
use crate::text::{default_stop_words, token_terms, FeatureVector, Featurizer, NGrams, TextError, Weighting};
use crate::triage::LinearModel;

pub const N_SIGNALS: usize = 8;
pub const AUTO_INCLUDE_THRESHOLD: f64 = 0.9;
pub const SEED_CURATOR: &str = "seed";

pub const TEMPORAL_CUES: [&str; 16] = [
    "months after",
    "weeks after",
    "month after",
    "year after",
    "years after",
    "persistent",
    "persisting",
    "persistence",
    "sequelae",
    "long-term",
    "lingering",
    "prolonged",
    "post-acute",
    "chronic",
    "beyond",
    "ongoing symptoms",
];

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("pmid {0} is not in the review pool")]
    NotFound(u64),
    #[error("pmid {0} was already decided")]
    AlreadyDecided(u64),
    #[error("no new decisions since the last iteration")]
    NoNewLabels,
    #[error("training labels contain a single class")]
    SingleClassDataset,
    #[error("non-finite signal for pmid {0}")]
    NonFiniteSignal(u64),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Train(TrainError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<TrainError> for LoopError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::SingleClassDataset => LoopError::SingleClassDataset,
            other => LoopError::Train(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub s5: f64,
    pub s6: f64,
    pub s7: f64,
    pub s8: f64,
}

impl SignalVector {
    pub fn to_array(&self) -> [f64; N_SIGNALS] {
        [self.s1, self.s2, self.s3, self.s4, self.s5, self.s6, self.s7, self.s8]
    }

    pub fn from_array(a: [f64; N_SIGNALS]) -> Self {
        SignalVector { s1: a[0], s2: a[1], s3: a[2], s4: a[3], s5: a[4], s6: a[5], s7: a[6], s8: a[7] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Per-journal positive counts with Laplace smoothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JournalPrior {
    counts: BTreeMap<String, (u64, u64)>,
    positives: u64,
    total: u64,
}

impl JournalPrior {
    pub fn from_labels<'a, I: IntoIterator<Item = (&'a str, bool)>>(labels: I) -> Self {
        let mut prior = JournalPrior::default();
        for (journal, y) in labels {
            let c = prior.counts.entry(journal.to_string()).or_default();
            c.0 += u64::from(y);
            c.1 += 1;
            prior.positives += u64::from(y);
            prior.total += 1;
        }
        prior
    }

    pub fn base_rate(&self) -> f64 {
        (self.positives as f64 + 1.0) / (self.total as f64 + 2.0)
    }

    pub fn prior(&self, journal: &str) -> f64 {
        match self.counts.get(journal) {
            Some(&(pos, n)) => (pos as f64 + 1.0) / (n as f64 + 2.0),
            None => self.base_rate(),
        }
    }
}

/// A single-head logistic model over one n-gram order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextModel {
    pub featurizer: Featurizer,
    pub head: LogisticHead,
}

impl TextModel {
    pub fn train(
        records: &[&CitationRecord],
        labels: &[bool],
        ngrams: NGrams,
        hyper: &Hyper,
    ) -> Result<Self, LoopError> {
        if !(labels.iter().any(|y| *y) && labels.iter().any(|y| !*y)) {
            return Err(LoopError::SingleClassDataset);
        }
        let texts: Vec<String> = records.iter().map(|r| r.text()).collect();
        let featurizer =
            Featurizer::fit(texts.iter().map(String::as_str), ngrams, Weighting::TfIdf, 1, Some(default_stop_words()))?;
        let xs: Vec<FeatureVector> = texts.iter().map(|t| featurizer.transform(t)).collect();
        let mut trained = train_joint(&xs, &[labels.to_vec()], featurizer.dim(), hyper)?;
        Ok(TextModel { featurizer, head: trained.heads.remove(0) })
    }

    pub fn probability(&self, record: &CitationRecord) -> f64 {
        self.head.probability(&self.featurizer.transform(&record.text()))
    }
}

/// Everything `compute_signals` reads. Missing parts fall back to neutral
/// defaults.
#[derive(Debug, Clone)]
pub struct Resources {
    pub synonyms: Option<Arc<TermList>>,
    pub symptoms: Option<Arc<TermList>>,
    pub triage: Option<Arc<LinearModel>>,
    pub unigram: Option<Arc<TextModel>>,
    pub bigram: Option<Arc<TextModel>>,
    pub journals: Option<Arc<JournalPrior>>,
    temporal: Arc<TermList>,
}

impl Default for Resources {
    fn default() -> Self {
        Resources {
            synonyms: None,
            symptoms: None,
            triage: None,
            unigram: None,
            bigram: None,
            journals: None,
            temporal: Arc::new(TermList::from_phrases(TEMPORAL_CUES)),
        }
    }
}

impl Resources {
    pub fn new(synonyms: Option<TermList>, symptoms: Option<TermList>, triage: Option<LinearModel>) -> Self {
        Resources {
            synonyms: synonyms.map(Arc::new),
            symptoms: symptoms.map(Arc::new),
            triage: triage.map(Arc::new),
            ..Resources::default()
        }
    }

    pub fn synonym_version(&self) -> String {
        self.synonyms.as_ref().map(|s| s.fingerprint()).unwrap_or_else(|| "none".into())
    }
}

pub fn compute_signals(record: &CitationRecord, res: &Resources) -> SignalVector {
    let title = token_terms(&record.title);
    let abstract_terms = token_terms(&record.abstract_text);
    let (s1, s2) = match &res.synonyms {
        Some(syn) => {
            let in_title = syn.count_in(&title);
            ((in_title + syn.count_in(&abstract_terms)) as f64, f64::from(u8::from(in_title > 0)))
        }
        None => (0.0, 0.0),
    };
    let s6 = match &res.symptoms {
        Some(sym) => {
            let body = if abstract_terms.is_empty() { &title } else { &abstract_terms };
            if body.is_empty() {
                0.0
            } else {
                sym.count_in(body) as f64 * 100.0 / body.len() as f64
            }
        }
        None => 0.0,
    };
    let s7 = (res.temporal.count_in(&title) + res.temporal.count_in(&abstract_terms)) as f64;
    SignalVector {
        s1,
        s2,
        s3: res.triage.as_ref().map_or(0.5, |m| m.score(record)),
        s4: res.unigram.as_ref().map_or(0.5, |m| m.probability(record)),
        s5: res.bigram.as_ref().map_or(0.5, |m| m.probability(record)),
        s6,
        s7,
        s8: res.journals.as_ref().map_or(0.5, |j| j.prior(&record.journal)),
    }
}

/// Signals that are unbounded counts or rates, rescaled before aggregation.
const UNBOUNDED: [usize; 3] = [0, 5, 6];

/// Logistic model over scaled signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub weights: [f64; N_SIGNALS],
    pub bias: f64,
    /// Divisor per signal; 1 for bounded signals, the observed maximum for
    /// unbounded ones.
    pub scale: [f64; N_SIGNALS],
}

impl MetaModel {
    pub fn uniform(scale: [f64; N_SIGNALS]) -> Self {
        MetaModel { weights: [1.0 / N_SIGNALS as f64; N_SIGNALS], bias: 0.0, scale }
    }

    /// Scale vector from the observed maxima of the unbounded signals.
    pub fn observed_scale<'a, I: IntoIterator<Item = &'a SignalVector>>(signals: I) -> [f64; N_SIGNALS] {
        let mut scale = [1.0f64; N_SIGNALS];
        for &i in &UNBOUNDED {
            scale[i] = 0.0;
        }
        for s in signals {
            let a = s.to_array();
            for &i in &UNBOUNDED {
                scale[i] = scale[i].max(a[i]);
            }
        }
        scale
    }

    pub fn scaled(&self, s: &SignalVector) -> [f64; N_SIGNALS] {
        let mut out = s.to_array();
        for (v, &d) in out.iter_mut().zip(&self.scale) {
            *v = if d > 0.0 { (*v / d).clamp(0.0, 1.0) } else { 0.0 };
        }
        out
    }

    fn features(&self, s: &SignalVector) -> FeatureVector {
        FeatureVector { entries: self.scaled(s).into_iter().enumerate().collect() }
    }

    pub fn fit(
        signals: &[SignalVector],
        labels: &[bool],
        scale: [f64; N_SIGNALS],
        hyper: &Hyper,
    ) -> Result<Self, LoopError> {
        let base = MetaModel::uniform(scale);
        let xs: Vec<FeatureVector> = signals.iter().map(|s| base.features(s)).collect();
        let mut trained = train_joint(&xs, &[labels.to_vec()], N_SIGNALS, hyper)?;
        let head = trained.heads.remove(0);
        let mut weights = [0.0; N_SIGNALS];
        weights.copy_from_slice(&head.weights);
        Ok(MetaModel { weights, bias: head.bias, scale })
    }
}

pub fn priority(p: f64) -> f64 {
    1.0 - (2.0 * p - 1.0).abs()
}

/// Probability and review priority for one signal vector.
pub fn aggregate(signals: &SignalVector, meta: &MetaModel) -> Result<(f64, f64), LoopError> {
    if !signals.is_finite() {
        return Err(LoopError::NonFiniteSignal(0));
    }
    let z: f64 = meta.scaled(signals).iter().zip(&meta.weights).map(|(x, w)| x * w).sum::<f64>() + meta.bias;
    let p = sigmoid(z);
    Ok((p, priority(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Accept,
    Reject,
}

impl Label {
    pub fn from_bool(y: bool) -> Self {
        if y {
            Label::Accept
        } else {
            Label::Reject
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Accept
    }

    pub fn status(self) -> Status {
        match self {
            Label::Accept => Status::Accepted,
            Label::Reject => Status::Rejected,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Accept => "accepted",
            Label::Reject => "rejected",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" | "accepted" | "1" | "true" | "yes" => Ok(Label::Accept),
            "reject" | "rejected" | "0" | "false" | "no" => Ok(Label::Reject),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub pmid: u64,
    pub pub_date: NaiveDate,
    pub signals: SignalVector,
    pub p: f64,
    pub priority: f64,
    pub status: Status,
    pub decided_by: Option<String>,
    pub decided_at: Option<DateTime<Utc>>,
    /// Iteration at which the item was decided, or last scored while pending.
    pub iteration: u32,
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub pmid: u64,
    pub label: Label,
    pub curator: String,
    pub at: DateTime<Utc>,
    pub iteration: u32,
}

impl Decision {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.pmid,
            self.label,
            self.curator,
            self.at.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            self.iteration
        )
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, LoopError> {
        let err = |reason: String| LoopError::Format { line: line_no, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        let [pmid, label, curator, at, iteration] = cols.as_slice() else {
            return Err(err(format!("expected 5 columns, got {}", cols.len())));
        };
        Ok(Decision {
            pmid: pmid.parse().map_err(|_| err(format!("bad pmid {pmid:?}")))?,
            label: label.parse().map_err(err)?,
            curator: curator.to_string(),
            at: DateTime::parse_from_rfc3339(at).map_err(|e| err(format!("bad timestamp: {e}")))?.with_timezone(&Utc),
            iteration: iteration.parse().map_err(|_| err(format!("bad iteration {iteration:?}")))?,
        })
    }
}

pub fn read_decisions<R: BufRead>(r: R) -> Result<Vec<Decision>, LoopError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(Decision::parse_line(line.trim_end(), i + 1)?);
    }
    Ok(out)
}

/// Seed labels, `pmid<TAB>label` per line.
pub fn read_seeds<R: BufRead>(r: R) -> Result<BTreeMap<u64, bool>, LoopError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (i == 0 && t.starts_with("pmid")) {
            continue;
        }
        let err = |reason: String| LoopError::Format { line: i + 1, reason };
        let (pmid, label) = t.split_once('\t').ok_or_else(|| err("expected pmid<TAB>label".into()))?;
        let pmid: u64 = pmid.trim().parse().map_err(|_| err(format!("bad pmid {pmid:?}")))?;
        let label: Label = label.parse().map_err(err)?;
        out.insert(pmid, label.is_positive());
    }
    Ok(out)
}

pub fn write_seeds<W: Write>(mut w: W, seeds: &BTreeMap<u64, bool>) -> std::io::Result<()> {
    for (pmid, y) in seeds {
        writeln!(w, "{pmid}\t{}", Label::from_bool(*y))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopHyper {
    pub sub_model: Hyper,
    pub meta_model: Hyper,
    /// Folds for out-of-fold sub-model signals on labeled items.
    pub folds: usize,
}

impl Default for LoopHyper {
    fn default() -> Self {
        LoopHyper {
            sub_model: Hyper::default(),
            meta_model: Hyper { learning_rate: 1.0, epochs: 1000, l2: 1e-4 },
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub pmid: u64,
    pub provisional: bool,
}

#[derive(Debug, Clone)]
pub struct LoopState {
    iteration: u32,
    items: BTreeMap<u64, ReviewItem>,
    records: BTreeMap<u64, Arc<CitationRecord>>,
    seeds: BTreeMap<u64, bool>,
    log: Vec<Decision>,
    consumed: usize,
    meta: MetaModel,
    resources: Resources,
    synonym_version: String,
    hyper: LoopHyper,
}

impl LoopState {
    /// Fresh state at iteration 0: untrained sub-models, uniform meta-model.
    /// Seeds for pmids outside `records` take effect when the record is added.
    pub fn new<I>(
        records: I,
        seeds: BTreeMap<u64, bool>,
        resources: Resources,
        hyper: LoopHyper,
    ) -> Result<Self, LoopError>
    where
        I: IntoIterator<Item = CitationRecord>,
    {
        let records: BTreeMap<u64, Arc<CitationRecord>> = records.into_iter().map(|r| (r.pmid, Arc::new(r))).collect();
        let signals: BTreeMap<u64, SignalVector> =
            records.iter().map(|(p, r)| (*p, compute_signals(r, &resources))).collect();
        let meta = MetaModel::uniform(MetaModel::observed_scale(signals.values()));
        let mut items = BTreeMap::new();
        for (pmid, s) in signals {
            let (p, prio) = aggregate(&s, &meta).map_err(|_| LoopError::NonFiniteSignal(pmid))?;
            let (status, decided_by) = match seeds.get(&pmid) {
                Some(y) => (Label::from_bool(*y).status(), Some(SEED_CURATOR.to_string())),
                None => (Status::Pending, None),
            };
            items.insert(
                pmid,
                ReviewItem {
                    pmid,
                    pub_date: records[&pmid].pub_date,
                    signals: s,
                    p,
                    priority: prio,
                    status,
                    decided_by,
                    decided_at: None,
                    iteration: 0,
                },
            );
        }
        Ok(LoopState {
            iteration: 0,
            items,
            records,
            seeds,
            log: Vec::new(),
            consumed: 0,
            meta,
            synonym_version: resources.synonym_version(),
            resources,
            hyper,
        })
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    pub fn item(&self, pmid: u64) -> Option<&ReviewItem> {
        self.items.get(&pmid)
    }

    pub fn log(&self) -> &[Decision] {
        &self.log
    }

    pub fn seeds(&self) -> &BTreeMap<u64, bool> {
        &self.seeds
    }

    pub fn meta_model(&self) -> &MetaModel {
        &self.meta
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn synonym_version(&self) -> &str {
        &self.synonym_version
    }

    pub fn new_decisions(&self) -> usize {
        self.log.len() - self.consumed
    }

    /// Adds unseen records as pending items scored with the current models.
    pub fn add_records<I: IntoIterator<Item = CitationRecord>>(&mut self, records: I) -> usize {
        let mut added = 0;
        for r in records {
            if self.records.contains_key(&r.pmid) {
                continue;
            }
            let s = compute_signals(&r, &self.resources);
            let Ok((p, prio)) = aggregate(&s, &self.meta) else {
                log::warn!("skipping pmid {}: non-finite signal", r.pmid);
                continue;
            };
            let seed = self.seeds.get(&r.pmid).map(|y| Label::from_bool(*y).status());
            self.items.insert(
                r.pmid,
                ReviewItem {
                    pmid: r.pmid,
                    pub_date: r.pub_date,
                    signals: s,
                    p,
                    priority: prio,
                    status: seed.unwrap_or(Status::Pending),
                    decided_by: seed.map(|_| SEED_CURATOR.to_string()),
                    decided_at: None,
                    iteration: self.iteration,
                },
            );
            self.records.insert(r.pmid, Arc::new(r));
            added += 1;
        }
        added
    }

    /// Pending items, most uncertain first; ties go to the newest article,
    /// then the lowest pmid.
    pub fn next_review_batch(&self, k: usize) -> Vec<ReviewItem> {
        let mut pending: Vec<&ReviewItem> = self.items.values().filter(|i| i.status == Status::Pending).collect();
        pending.sort_by(|a, b| {
            b.priority.total_cmp(&a.priority).then(b.pub_date.cmp(&a.pub_date)).then(a.pmid.cmp(&b.pmid))
        });
        pending.into_iter().take(k).cloned().collect()
    }

    pub fn check_decidable(&self, pmid: u64) -> Result<(), LoopError> {
        match self.items.get(&pmid) {
            None => Err(LoopError::NotFound(pmid)),
            Some(i) if i.status != Status::Pending => Err(LoopError::AlreadyDecided(pmid)),
            Some(_) => Ok(()),
        }
    }

    pub fn record_decision(
        &mut self,
        pmid: u64,
        label: Label,
        curator: &str,
        at: DateTime<Utc>,
    ) -> Result<ReviewItem, LoopError> {
        let decision = Decision { pmid, label, curator: curator.to_string(), at, iteration: self.iteration };
        self.apply(decision)
    }

    fn apply(&mut self, d: Decision) -> Result<ReviewItem, LoopError> {
        self.check_decidable(d.pmid)?;
        let item = self.items.get_mut(&d.pmid).expect("checked above");
        item.status = d.label.status();
        item.decided_by = Some(d.curator.clone());
        item.decided_at = Some(d.at);
        item.iteration = d.iteration;
        let out = item.clone();
        self.log.push(d);
        Ok(out)
    }

    fn labeled(&self) -> Vec<(u64, bool)> {
        self.items
            .values()
            .filter_map(|i| match i.status {
                Status::Accepted => Some((i.pmid, true)),
                Status::Rejected => Some((i.pmid, false)),
                Status::Pending => None,
            })
            .collect()
    }

    fn trained_resources(&self, labeled: &[(u64, bool)]) -> Result<Resources, LoopError> {
        let recs: Vec<&CitationRecord> = labeled.iter().map(|(p, _)| self.records[p].as_ref()).collect();
        let ys: Vec<bool> = labeled.iter().map(|(_, y)| *y).collect();
        let h = &self.hyper.sub_model;
        Ok(Resources {
            unigram: Some(Arc::new(TextModel::train(&recs, &ys, NGrams::Unigram, h)?)),
            bigram: Some(Arc::new(TextModel::train(&recs, &ys, NGrams::Bigram, h)?)),
            journals: Some(Arc::new(JournalPrior::from_labels(
                recs.iter().map(|r| r.journal.as_str()).zip(ys.iter().copied()),
            ))),
            ..self.resources.clone()
        })
    }

    /// Retrains on seeds plus logged decisions and rescores every item.
    /// Leaves the state untouched on error.
    pub fn run_iteration(&mut self) -> Result<(), LoopError> {
        if self.new_decisions() == 0 {
            return Err(LoopError::NoNewLabels);
        }
        let labeled = self.labeled();
        let full = self.trained_resources(&labeled)?;

        // Labeled items are scored by models that never saw them, so the
        // meta-model learns how much to trust the sub-models on unseen text.
        let folds = self.hyper.folds.max(2);
        let mut signals: BTreeMap<u64, SignalVector> = BTreeMap::new();
        for f in 0..folds {
            let (held, train): (Vec<_>, Vec<_>) = labeled.iter().enumerate().partition(|(i, _)| i % folds == f);
            let train: Vec<(u64, bool)> = train.into_iter().map(|(_, x)| *x).collect();
            let res = match self.trained_resources(&train) {
                Ok(r) => r,
                Err(LoopError::SingleClassDataset) => Resources {
                    journals: Some(Arc::new(JournalPrior::from_labels(
                        train.iter().map(|(p, y)| (self.records[p].journal.as_str(), *y)),
                    ))),
                    ..self.resources.clone()
                },
                Err(e) => return Err(e),
            };
            for (_, (pmid, _)) in held {
                signals.insert(*pmid, compute_signals(&self.records[pmid], &res));
            }
        }
        for (pmid, item) in &self.items {
            if item.status == Status::Pending {
                signals.insert(*pmid, compute_signals(&self.records[pmid], &full));
            }
        }
        if let Some((pmid, _)) = signals.iter().find(|(_, s)| !s.is_finite()) {
            return Err(LoopError::NonFiniteSignal(*pmid));
        }

        let scale = MetaModel::observed_scale(signals.values());
        let xs: Vec<SignalVector> = labeled.iter().map(|(p, _)| signals[p]).collect();
        let ys: Vec<bool> = labeled.iter().map(|(_, y)| *y).collect();
        let meta = MetaModel::fit(&xs, &ys, scale, &self.hyper.meta_model)?;

        let next = self.iteration + 1;
        let mut items = self.items.clone();
        for (pmid, item) in items.iter_mut() {
            let s = signals[pmid];
            let (p, prio) = aggregate(&s, &meta).map_err(|_| LoopError::NonFiniteSignal(*pmid))?;
            item.signals = s;
            item.p = p;
            item.priority = prio;
            if item.status == Status::Pending {
                item.iteration = next;
            }
        }
        self.items = items;
        self.meta = meta;
        self.resources = full;
        self.iteration = next;
        self.consumed = self.log.len();
        Ok(())
    }

    /// Signals and probability for an article outside the pool.
    pub fn predict(&self, record: &CitationRecord) -> Result<(SignalVector, f64), LoopError> {
        let s = compute_signals(record, &self.resources);
        let (p, _) = aggregate(&s, &self.meta).map_err(|_| LoopError::NonFiniteSignal(record.pmid))?;
        Ok((s, p))
    }

    /// Accepted items plus pending items at or above `threshold`, the latter
    /// flagged provisional.
    pub fn collection_membership(&self, threshold: f64) -> Vec<Member> {
        self.items
            .values()
            .filter_map(|i| match i.status {
                Status::Accepted => Some(Member { pmid: i.pmid, provisional: false }),
                Status::Pending if i.p >= threshold => Some(Member { pmid: i.pmid, provisional: true }),
                _ => None,
            })
            .collect()
    }

    /// Rebuilds a state by replaying `decisions` from iteration 0 up to
    /// `iteration`.
    pub fn replay<I>(
        records: I,
        seeds: BTreeMap<u64, bool>,
        resources: Resources,
        hyper: LoopHyper,
        decisions: &[Decision],
        iteration: u32,
    ) -> Result<Self, LoopError>
    where
        I: IntoIterator<Item = CitationRecord>,
    {
        if let Some(d) = decisions.iter().find(|d| d.iteration > iteration) {
            return Err(LoopError::Replay(format!("decision on {} is from future iteration {}", d.pmid, d.iteration)));
        }
        if decisions.windows(2).any(|w| w[1].iteration < w[0].iteration) {
            return Err(LoopError::Replay("decision log iterations go backwards".into()));
        }
        let mut state = LoopState::new(records, seeds, resources, hyper)?;
        let mut rest = decisions;
        for it in 0..=iteration {
            let n = rest.iter().take_while(|d| d.iteration == it).count();
            for d in &rest[..n] {
                state.apply(d.clone())?;
            }
            rest = &rest[n..];
            if it < iteration {
                state.run_iteration()?;
            }
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LoopMeta {
    iteration: u32,
    synonym_version: String,
}

/// Loop state behind locks with an on-disk decision log.
///
/// Decisions are serialized through one writer. An iteration holds the writer
/// for its whole duration while readers keep seeing the previous state.
#[derive(Debug)]
pub struct SharedLoop {
    state: RwLock<Arc<LoopState>>,
    writer: Mutex<Option<PathBuf>>,
}

impl SharedLoop {
    pub fn in_memory(state: LoopState) -> Self {
        SharedLoop { state: RwLock::new(Arc::new(state)), writer: Mutex::new(None) }
    }

    /// Opens (or initializes) a loop directory holding `seeds.tsv`,
    /// `decisions.log` and `loop.json`, replaying the log.
    pub fn open<I>(
        dir: impl AsRef<Path>,
        records: I,
        default_seeds: BTreeMap<u64, bool>,
        resources: Resources,
        hyper: LoopHyper,
    ) -> Result<Self, LoopError>
    where
        I: IntoIterator<Item = CitationRecord>,
    {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let seeds_path = dir.join("seeds.tsv");
        let seeds = if seeds_path.exists() {
            read_seeds(BufReader::new(File::open(&seeds_path)?))?
        } else {
            write_seeds(File::create(&seeds_path)?, &default_seeds)?;
            default_seeds
        };
        let log_path = dir.join("decisions.log");
        let decisions =
            if log_path.exists() { read_decisions(BufReader::new(File::open(&log_path)?))? } else { Vec::new() };
        let meta_path = dir.join("loop.json");
        let iteration = if meta_path.exists() {
            let meta: LoopMeta = serde_json::from_reader(File::open(&meta_path)?)?;
            if meta.synonym_version != resources.synonym_version() {
                log::warn!("synonym list changed since the loop was last saved");
            }
            meta.iteration
        } else {
            0
        };
        let state = LoopState::replay(records, seeds, resources, hyper, &decisions, iteration)?;
        Ok(SharedLoop { state: RwLock::new(Arc::new(state)), writer: Mutex::new(Some(dir)) })
    }

    pub fn snapshot(&self) -> Arc<LoopState> {
        self.state.read().expect("loop lock poisoned").clone()
    }

    pub fn decide(&self, pmid: u64, label: Label, curator: &str, at: DateTime<Utc>) -> Result<ReviewItem, LoopError> {
        let dir = self.writer.lock().expect("loop writer poisoned");
        let mut guard = self.state.write().expect("loop lock poisoned");
        guard.check_decidable(pmid)?;
        let mut next = (**guard).clone();
        let item = next.record_decision(pmid, label, curator, at)?;
        if let Some(dir) = dir.as_ref() {
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join("decisions.log"))?;
            writeln!(f, "{}", next.log.last().expect("just appended").to_line())?;
            f.sync_data()?;
        }
        *guard = Arc::new(next);
        Ok(item)
    }

    pub fn iterate(&self) -> Result<u32, LoopError> {
        let dir = self.writer.lock().expect("loop writer poisoned");
        let mut next = (*self.snapshot()).clone();
        next.run_iteration()?;
        if let Some(dir) = dir.as_ref() {
            let meta = LoopMeta { iteration: next.iteration, synonym_version: next.synonym_version.clone() };
            let tmp = dir.join("loop.json.tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(&meta)?)?;
            fs::rename(&tmp, dir.join("loop.json"))?;
        }
        let it = next.iteration;
        *self.state.write().expect("loop lock poisoned") = Arc::new(next);
        Ok(it)
    }

    /// Adds new corpus records to the pool. Returns how many were new.
    pub fn add_records<I: IntoIterator<Item = CitationRecord>>(&self, records: I) -> usize {
        let _w = self.writer.lock().expect("loop writer poisoned");
        let mut next = (*self.snapshot()).clone();
        let n = next.add_records(records);
        if n > 0 {
            *self.state.write().expect("loop lock poisoned") = Arc::new(next);
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pmid: u64, title: &str, abs: &str, journal: &str) -> CitationRecord {
        let mut r = CitationRecord::new(pmid, title, abs, NaiveDate::from_ymd_opt(2022, 1, 1).unwrap());
        r.journal = journal.into();
        r
    }

    fn resources() -> Resources {
        Resources::new(
            Some(TermList::from_phrases(["long covid", "post-acute sequelae of sars-cov-2 infection", "pasc"])),
            Some(TermList::from_phrases(["fatigue", "dyspnea", "brain fog"])),
            None,
        )
    }

    #[test]
    fn defaults_without_resources() {
        let s = compute_signals(&rec(1, "Vaccine uptake", "We surveyed adults.", "J"), &Resources::default());
        assert_eq!(s.to_array(), [0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn named_synonym_counts() {
        let r = rec(1, "Outcomes", "We studied post-acute sequelae of SARS-CoV-2 infection in adults.", "J");
        assert!(compute_signals(&r, &resources()).s1 >= 1.0);
        let r = rec(2, "Long COVID in children", "PASC and fatigue were persistent months after infection.", "J");
        let s = compute_signals(&r, &resources());
        assert_eq!((s.s1, s.s2, s.s7), (2.0, 1.0, 2.0));
        // 8 abstract tokens, one symptom
        assert!((s.s6 - 12.5).abs() < 1e-12);
    }

    #[test]
    fn priority_formula() {
        assert_eq!(priority(0.5), 1.0);
        assert_eq!(priority(1.0), 0.0);
        assert_eq!(priority(0.0), 0.0);
        let s = SignalVector::from_array([2.0, 1.0, 0.5, 0.5, 0.5, 3.0, 1.0, 0.5]);
        let meta = MetaModel::uniform([4.0, 1.0, 1.0, 1.0, 1.0, 6.0, 2.0, 1.0]);
        let (p, prio) = aggregate(&s, &meta).unwrap();
        let z: f64 = (0.5 + 1.0 + 0.5 + 0.5 + 0.5 + 0.5 + 0.5 + 0.5) / 8.0;
        assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
        assert!((prio - (1.0 - (2.0 * p - 1.0).abs())).abs() < 1e-15);
        let bad = SignalVector { s4: f64::NAN, ..s };
        assert!(matches!(aggregate(&bad, &meta), Err(LoopError::NonFiniteSignal(_))));
    }

    #[test]
    fn journal_prior_is_smoothed() {
        let j = JournalPrior::from_labels([("A", true), ("A", true), ("A", false), ("B", false)]);
        assert!((j.prior("A") - 3.0 / 5.0).abs() < 1e-12);
        assert!((j.prior("B") - 1.0 / 3.0).abs() < 1e-12);
        assert!((j.prior("C") - 3.0 / 6.0).abs() < 1e-12);
    }

    fn small_state() -> LoopState {
        let mut recs = Vec::new();
        for i in 0..20u64 {
            if i % 2 == 0 {
                recs.push(rec(i + 1, "Long COVID follow-up", "fatigue persistent months after infection", "A"));
            } else {
                recs.push(rec(i + 1, "Acute ward outcomes", "fever during admission", "B"));
            }
        }
        let seeds = [(1, true), (2, false), (3, true), (4, false)].into_iter().collect();
        LoopState::new(recs, seeds, resources(), LoopHyper::default()).unwrap()
    }

    #[test]
    fn decisions_and_iterations() {
        let mut st = small_state();
        assert!(matches!(st.run_iteration(), Err(LoopError::NoNewLabels)));
        assert_eq!(st.iteration(), 0);
        let now = Utc::now();
        let item = st.record_decision(5, Label::Accept, "ann", now).unwrap();
        assert_eq!((item.status, item.decided_by.as_deref()), (Status::Accepted, Some("ann")));
        assert_eq!(st.log().len(), 1);
        assert!(matches!(st.record_decision(5, Label::Reject, "bob", now), Err(LoopError::AlreadyDecided(5))));
        assert!(matches!(st.record_decision(1, Label::Reject, "bob", now), Err(LoopError::AlreadyDecided(1))));
        assert!(matches!(st.record_decision(999, Label::Reject, "bob", now), Err(LoopError::NotFound(999))));
        assert_eq!(st.log().len(), 1);
        st.run_iteration().unwrap();
        assert_eq!(st.iteration(), 1);
        assert_eq!(st.item(5).unwrap().status, Status::Accepted);
        assert!(st.item(7).unwrap().p > st.item(6).unwrap().p);
    }

    #[test]
    fn single_class_leaves_state() {
        let recs = vec![rec(1, "a", "b", "J"), rec(2, "c", "d", "J"), rec(3, "e", "f", "J")];
        let seeds = [(1, true)].into_iter().collect();
        let mut st = LoopState::new(recs, seeds, Resources::default(), LoopHyper::default()).unwrap();
        st.record_decision(2, Label::Accept, "x", Utc::now()).unwrap();
        assert!(matches!(st.run_iteration(), Err(LoopError::SingleClassDataset)));
        assert_eq!(st.iteration(), 0);
        assert_eq!(st.new_decisions(), 1);
    }

    #[test]
    fn queue_order_and_membership() {
        let mut st = small_state();
        let batch = st.next_review_batch(100);
        assert_eq!(batch.len(), 16);
        for w in batch.windows(2) {
            assert!(w[0].priority >= w[1].priority);
        }
        assert!(st.next_review_batch(3).len() == 3);
        st.items.get_mut(&6).unwrap().p = 0.99;
        st.items.get_mut(&7).unwrap().p = 0.95;
        st.items.get_mut(&7).unwrap().status = Status::Rejected;
        let m = st.collection_membership(0.9);
        let members: Vec<(u64, bool)> = m.iter().map(|m| (m.pmid, m.provisional)).collect();
        assert!(members.contains(&(1, false)) && members.contains(&(3, false)));
        assert!(members.contains(&(6, true)));
        assert!(!members.iter().any(|(p, _)| *p == 7 || *p == 2));
    }

    #[test]
    fn decision_lines_round_trip() {
        let d = Decision {
            pmid: 42,
            label: Label::Reject,
            curator: "c1".into(),
            at: DateTime::parse_from_rfc3339("2023-04-05T06:07:08.123456Z").unwrap().with_timezone(&Utc),
            iteration: 3,
        };
        assert_eq!(Decision::parse_line(&d.to_line(), 1).unwrap(), d);
        assert!(Decision::parse_line("1\tmaybe\tc\t2023-01-01T00:00:00Z\t0", 1).is_err());
    }

    #[test]
    fn shared_loop_persists_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let st = small_state();
        let recs: Vec<CitationRecord> = st.records.values().map(|r| (**r).clone()).collect();
        let seeds = st.seeds().clone();
        let open = || SharedLoop::open(dir.path(), recs.clone(), seeds.clone(), resources(), LoopHyper::default());
        let shared = open().unwrap();
        let t = Utc::now();
        shared.decide(5, Label::Accept, "a", t).unwrap();
        shared.decide(6, Label::Reject, "b", t).unwrap();
        shared.iterate().unwrap();
        shared.decide(7, Label::Accept, "a", t).unwrap();
        assert!(matches!(shared.decide(7, Label::Accept, "a", t), Err(LoopError::AlreadyDecided(7))));
        let before = shared.snapshot();
        let reopened = open().unwrap().snapshot();
        assert_eq!(reopened.iteration(), 1);
        assert_eq!(reopened.log(), before.log());
        assert_eq!(reopened.meta_model(), before.meta_model());
        assert_eq!(reopened.items().cloned().collect::<Vec<_>>(), before.items().cloned().collect::<Vec<_>>());
    }
}
