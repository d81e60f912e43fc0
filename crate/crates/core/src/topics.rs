//! Multi-label topic annotation.
//!
//! One vocabulary, one featurization per record, K logistic heads trained
//! together on the summed loss. Each head has its own decision threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CitationRecord;
use crate::eval::prf;
use crate::linear::{train_joint, Hyper, LogisticHead, TrainError};
use crate::model_io::{LinearArtifact, ModelIoError};
use crate::text::{FeatureVector, Featurizer, NGrams, TextError, Weighting};

pub const DEFAULT_TOPICS: [&str; 8] = [
    "Treatment",
    "Prevention",
    "Diagnosis",
    "Mechanism",
    "Transmission",
    "Case Report",
    "Epidemic Forecasting",
    "Long COVID",
];

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("topic {0:?} has a single class in the training data")]
    DegenerateTopic(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("duplicate topic name {0:?}")]
    DuplicateTopic(String),
    #[error("no topic model loaded")]
    ModelMissing,
    #[error("label file line {line}: {reason}")]
    LabelFormat { line: usize, reason: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered, duplicate-free list of topic names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSet(Vec<String>);

impl Default for TopicSet {
    fn default() -> Self {
        TopicSet(DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect())
    }
}

impl TopicSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Result<Self, TopicError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for n in names {
            let n = n.into();
            if !seen.insert(n.clone()) {
                return Err(TopicError::DuplicateTopic(n));
            }
            out.push(n);
        }
        Ok(TopicSet(out))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicHyper {
    pub gd: Hyper,
    pub min_df: u64,
}

impl Default for TopicHyper {
    fn default() -> Self {
        TopicHyper { gd: Hyper::default(), min_df: 1 }
    }
}

pub struct MultiLabelModel {
    pub featurizer: Featurizer,
    pub topics: TopicSet,
    pub heads: Vec<LogisticHead>,
    pub thresholds: Vec<f64>,
    pub hyper: Hyper,
    featurize_calls: AtomicUsize,
}

impl Clone for MultiLabelModel {
    fn clone(&self) -> Self {
        MultiLabelModel {
            featurizer: self.featurizer.clone(),
            topics: self.topics.clone(),
            heads: self.heads.clone(),
            thresholds: self.thresholds.clone(),
            hyper: self.hyper,
            featurize_calls: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for MultiLabelModel {
    fn eq(&self, other: &Self) -> bool {
        self.featurizer == other.featurizer
            && self.topics == other.topics
            && self.heads == other.heads
            && self.thresholds == other.thresholds
            && self.hyper == other.hyper
    }
}

impl std::fmt::Debug for MultiLabelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiLabelModel")
            .field("topics", &self.topics)
            .field("dim", &self.featurizer.dim())
            .field("thresholds", &self.thresholds)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub topic: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAnnotation {
    pub pmid: u64,
    /// One entry per topic, in topic-set order.
    pub scores: Vec<TopicScore>,
    pub assigned: Vec<String>,
}

impl MultiLabelModel {
    /// Number of record featurizations since the model was built or loaded.
    pub fn featurize_calls(&self) -> usize {
        self.featurize_calls.load(Ordering::Relaxed)
    }

    fn features(&self, record: &CitationRecord) -> FeatureVector {
        self.featurize_calls.fetch_add(1, Ordering::Relaxed);
        self.featurizer.transform(&record.text())
    }

    fn scores_for(&self, x: &FeatureVector) -> Vec<f64> {
        self.heads.iter().map(|h| h.probability(x)).collect()
    }

    fn annotation(&self, pmid: u64, scores: Vec<f64>) -> TopicAnnotation {
        let names = self.topics.names();
        let assigned = scores
            .iter()
            .zip(&self.thresholds)
            .zip(names)
            .filter(|((s, t), _)| *s >= *t)
            .map(|(_, n)| n.clone())
            .collect();
        TopicAnnotation {
            pmid,
            scores: names.iter().zip(scores).map(|(n, s)| TopicScore { topic: n.clone(), score: s }).collect(),
            assigned,
        }
    }

    /// Picks each head's threshold from 0.05..=0.95 (step 0.05) to maximize
    /// F1 on `validation`. Ties keep the lower threshold.
    pub fn tune_thresholds(&mut self, validation: &[(CitationRecord, BTreeSet<String>)]) {
        let all_scores: Vec<Vec<f64>> = validation.iter().map(|(r, _)| self.scores_for(&self.features(r))).collect();
        for k in 0..self.heads.len() {
            let name = &self.topics.names()[k];
            let gold: BTreeSet<usize> =
                validation.iter().enumerate().filter(|(_, (_, l))| l.contains(name)).map(|(i, _)| i).collect();
            let mut best = (f64::NEG_INFINITY, self.thresholds[k]);
            for step in 1..=19 {
                let t = step as f64 * 0.05;
                let pred: BTreeSet<usize> =
                    all_scores.iter().enumerate().filter(|(_, s)| s[k] >= t).map(|(i, _)| i).collect();
                let f1 = prf(&gold, &pred).f1;
                if f1 > best.0 {
                    best = (f1, t);
                }
            }
            self.thresholds[k] = best.1;
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), TopicError> {
        let mut meta = BTreeMap::new();
        meta.insert("kind".into(), "topics".into());
        meta.insert("topics".into(), self.topics.names().join("|"));
        let th: Vec<String> = self.thresholds.iter().map(|t| format!("{t:?}")).collect();
        meta.insert("thresholds".into(), th.join("|"));
        meta.insert("learning_rate".into(), format!("{:?}", self.hyper.learning_rate));
        meta.insert("epochs".into(), self.hyper.epochs.to_string());
        meta.insert("l2".into(), format!("{:?}", self.hyper.l2));
        let art = LinearArtifact { meta, featurizer: self.featurizer.clone(), heads: self.heads.clone() };
        Ok(art.write(w)?)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, TopicError> {
        let art = LinearArtifact::read(r)?;
        if art.meta_value("kind")? != "topics" {
            return Err(ModelIoError::Format("not a topic model".into()).into());
        }
        let topics = TopicSet::new(art.meta_value("topics")?.split('|'))?;
        let thresholds: Vec<f64> = art
            .meta_value("thresholds")?
            .split('|')
            .map(|t| t.parse().map_err(|_| ModelIoError::Format(format!("bad threshold {t:?}"))))
            .collect::<Result<_, _>>()?;
        if thresholds.len() != topics.len() || art.heads.len() != topics.len() {
            return Err(ModelIoError::Format("topic, threshold and head counts differ".into()).into());
        }
        let hyper = Hyper {
            learning_rate: art.meta_parse("learning_rate")?,
            epochs: art.meta_parse("epochs")?,
            l2: art.meta_parse("l2")?,
        };
        Ok(MultiLabelModel {
            featurizer: art.featurizer,
            topics,
            heads: art.heads,
            thresholds,
            hyper,
            featurize_calls: AtomicUsize::new(0),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTopics {
    pub model: MultiLabelModel,
    pub loss_history: Vec<f64>,
}

/// Trains all heads in one joint run.
pub fn train_topics(
    labeled: &[(CitationRecord, BTreeSet<String>)],
    topics: &TopicSet,
    hyper: &TopicHyper,
) -> Result<TrainedTopics, TopicError> {
    for (_, labels) in labeled {
        if let Some(unknown) = labels.iter().find(|l| topics.index_of(l).is_none()) {
            return Err(TopicError::UnknownTopic(unknown.clone()));
        }
    }
    let columns: Vec<Vec<bool>> =
        topics.names().iter().map(|t| labeled.iter().map(|(_, l)| l.contains(t)).collect()).collect();
    for (name, col) in topics.names().iter().zip(&columns) {
        if !(col.iter().any(|y| *y) && col.iter().any(|y| !*y)) {
            return Err(TopicError::DegenerateTopic(name.clone()));
        }
    }
    let texts: Vec<String> = labeled.iter().map(|(r, _)| r.text()).collect();
    let featurizer =
        Featurizer::fit(texts.iter().map(String::as_str), NGrams::Unigram, Weighting::TfIdf, hyper.min_df, None)?;
    let xs: Vec<FeatureVector> = texts.iter().map(|t| featurizer.transform(t)).collect();
    let trained = train_joint(&xs, &columns, featurizer.dim(), &hyper.gd)?;
    Ok(TrainedTopics {
        model: MultiLabelModel {
            featurizer,
            topics: topics.clone(),
            thresholds: vec![0.5; topics.len()],
            heads: trained.heads,
            hyper: hyper.gd,
            featurize_calls: AtomicUsize::new(0),
        },
        loss_history: trained.loss_history,
    })
}

/// Scores every topic from one featurization of `record`.
pub fn annotate_topics(
    record: &CitationRecord,
    model: Option<&MultiLabelModel>,
) -> Result<TopicAnnotation, TopicError> {
    let model = model.ok_or(TopicError::ModelMissing)?;
    let x = model.features(record);
    Ok(model.annotation(record.pmid, model.scores_for(&x)))
}

/// Histogram of assigned-topic counts: `bins[n]` = articles with n topics.
pub fn topic_distribution(annotations: &[BTreeSet<String>], k: usize) -> Vec<usize> {
    let mut bins = vec![0; k + 1];
    for a in annotations {
        let n = a.len().min(k);
        bins[n] += 1;
    }
    bins
}

/// Fraction of articles carrying one or two topics.
pub fn one_or_two_fraction(bins: &[usize]) -> f64 {
    let total: usize = bins.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mid: usize = bins.iter().skip(1).take(2).sum();
    mid as f64 / total as f64
}

/// Reads `pmid<TAB>topic,topic,...` lines.
pub fn read_label_file<R: BufRead>(r: R) -> Result<BTreeMap<u64, BTreeSet<String>>, TopicError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: &str| TopicError::LabelFormat { line: i + 1, reason: reason.into() };
        let (pmid, labels) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        let pmid: u64 = pmid.trim().parse().map_err(|_| err("bad pmid"))?;
        let labels = labels.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        out.insert(pmid, labels);
    }
    Ok(out)
}

/// `pmid<TAB>topic<TAB>score` rows; only assigned topics unless `all_scores`.
pub fn output_rows(ann: &TopicAnnotation, all_scores: bool) -> Vec<String> {
    ann.scores
        .iter()
        .filter(|s| all_scores || ann.assigned.contains(&s.topic))
        .map(|s| format!("{}\t{}\t{:.6}", ann.pmid, s.topic, s.score))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn rec(pmid: u64, text: &str) -> CitationRecord {
        CitationRecord::new(pmid, "Article", text, NaiveDate::from_ymd_opt(2021, 5, 1).unwrap())
    }

    fn marker_corpus() -> (TopicSet, Vec<(CitationRecord, BTreeSet<String>)>) {
        let topics = TopicSet::new(["A", "B", "C"]).unwrap();
        let markers = ["mka", "mkb", "mkc"];
        let data = (0..48u64)
            .map(|i| {
                let mut words = vec!["patients", "cohort"];
                let mut labels = BTreeSet::new();
                for (k, m) in markers.iter().enumerate() {
                    if (i >> k) & 1 == 1 {
                        words.push(m);
                        labels.insert(topics.names()[k].clone());
                    }
                }
                (rec(i + 1, &words.join(" ")), labels)
            })
            .collect();
        (topics, data)
    }

    #[test]
    fn recovers_marker_topics() {
        let (topics, data) = marker_corpus();
        let trained = train_topics(&data, &topics, &TopicHyper::default()).unwrap();
        for w in trained.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for (r, labels) in &data {
            let ann = annotate_topics(r, Some(&trained.model)).unwrap();
            let got: BTreeSet<String> = ann.assigned.iter().cloned().collect();
            assert_eq!(&got, labels, "pmid {}", r.pmid);
            assert_eq!(ann.scores.len(), 3);
        }
        assert_eq!(trained.model.featurize_calls(), data.len());
    }

    #[test]
    fn degenerate_and_unknown_topics() {
        let topics = TopicSet::new(["A", "B"]).unwrap();
        let data = vec![(rec(1, "x"), BTreeSet::from(["A".to_string()])), (rec(2, "y"), BTreeSet::new())];
        assert!(
            matches!(train_topics(&data, &topics, &TopicHyper::default()), Err(TopicError::DegenerateTopic(t)) if t == "B")
        );
        let data = vec![(rec(1, "x"), BTreeSet::from(["Z".to_string()]))];
        assert!(matches!(train_topics(&data, &topics, &TopicHyper::default()), Err(TopicError::UnknownTopic(_))));
        assert!(matches!(TopicSet::new(["A", "A"]), Err(TopicError::DuplicateTopic(_))));
    }

    #[test]
    fn empty_assignment_and_threshold_monotonicity() {
        let (topics, data) = marker_corpus();
        let mut model = train_topics(&data, &topics, &TopicHyper::default()).unwrap().model;
        let plain = rec(99, "patients cohort");
        assert!(annotate_topics(&plain, Some(&model)).unwrap().assigned.is_empty());
        let before: Vec<_> = data.iter().map(|(r, _)| annotate_topics(r, Some(&model)).unwrap()).collect();
        model.thresholds[0] = 0.9;
        for ((r, _), b) in data.iter().zip(&before) {
            let after = annotate_topics(r, Some(&model)).unwrap();
            let a: BTreeSet<_> = after.assigned.iter().collect();
            let b: BTreeSet<_> = b.assigned.iter().collect();
            assert!(a.is_subset(&b));
        }
        assert!(matches!(annotate_topics(&plain, None), Err(TopicError::ModelMissing)));
    }

    #[test]
    fn head_scores_match_independent_logistic() {
        let (topics, data) = marker_corpus();
        let model = train_topics(&data, &topics, &TopicHyper::default()).unwrap().model;
        let r = &data[5].0;
        let ann = annotate_topics(r, Some(&model)).unwrap();
        let x = model.featurizer.transform(&r.text());
        for (k, s) in ann.scores.iter().enumerate() {
            let z: f64 =
                x.entries.iter().map(|(i, v)| model.heads[k].weights[*i] * v).sum::<f64>() + model.heads[k].bias;
            assert_eq!(s.score, 1.0 / (1.0 + (-z).exp()));
        }
    }

    #[test]
    fn distribution() {
        let sets: Vec<BTreeSet<String>> =
            vec![["a".to_string()].into(), ["b".to_string()].into(), ["a".to_string(), "b".to_string()].into()];
        let bins = topic_distribution(&sets, 8);
        assert_eq!(bins[1], 2);
        assert_eq!(bins[2], 1);
        assert_eq!(bins.len(), 9);
        assert_eq!(one_or_two_fraction(&bins), 1.0);
        assert_eq!(topic_distribution(&[], 8), vec![0; 9]);
    }

    #[test]
    fn model_file_round_trip_and_tuning() {
        let (topics, data) = marker_corpus();
        let mut model = train_topics(&data, &topics, &TopicHyper::default()).unwrap().model;
        model.tune_thresholds(&data);
        assert!(model.thresholds.iter().all(|t| (0.05..=0.95).contains(t)));
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        assert_eq!(MultiLabelModel::read(&buf[..]).unwrap(), model);
    }

    #[test]
    fn label_file() {
        let labels = read_label_file("1\tTreatment,Long COVID\n2\t\n3\n".as_bytes()).unwrap();
        assert_eq!(labels[&1].len(), 2);
        assert!(labels[&2].is_empty() && labels[&3].is_empty());
        assert!(read_label_file("x\tA".as_bytes()).is_err());
    }
}
