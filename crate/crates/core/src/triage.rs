//! Relevance triage for newly ingested records.
//!
//! A record first passes a keyword prefilter. Records with no keyword mention
//! are out. Mentioning records are scored by a logistic model over TF-IDF
//! features; those below threshold get an exclusion category:
//!
//! * 3: keywords occur only in the funding statement;
//! * 2: keywords occur only in a single abstract sentence, and that sentence
//!   carries a background cue ("pandemic", "since", "during", "after",
//!   "amid", "background");
//! * 1: everything else (the findings are unrelated).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CitationRecord;
use crate::linear::{train_joint, Hyper, LogisticHead, TrainError};
use crate::model_io::{LinearArtifact, ModelIoError};
use crate::text::{content_hash, default_stop_words, token_terms, Featurizer, NGrams, TextError, Weighting};

pub const DEFAULT_KEYWORDS: [&str; 5] = ["covid-19", "sars-cov-2", "coronavirus", "2019-ncov", "ncov"];
pub const BACKGROUND_CUES: [&str; 6] = ["pandemic", "since", "during", "after", "amid", "background"];

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("no triage model loaded")]
    ModelMissing,
    #[error("keyword list is empty")]
    NoKeywords,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error("training data line {line}: {reason}")]
    DataFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Title,
    Abstract,
    Keywords,
    Mesh,
    FundingText,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Title => "title",
            Field::Abstract => "abstract",
            Field::Keywords => "keywords",
            Field::Mesh => "mesh",
            Field::FundingText => "funding_text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prefilter {
    NoMention,
    Mention(BTreeSet<Field>),
}

/// Keyword list and background cues used by the prefilter and category rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordRules {
    keywords: Vec<Vec<String>>,
    cues: BTreeSet<String>,
}

impl Default for KeywordRules {
    fn default() -> Self {
        KeywordRules::new(DEFAULT_KEYWORDS).expect("default keywords are non-empty")
    }
}

impl KeywordRules {
    pub fn new<I, S>(keywords: I) -> Result<Self, TriageError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords: Vec<Vec<String>> =
            keywords.into_iter().map(|k| token_terms(k.as_ref())).filter(|k| !k.is_empty()).collect();
        if keywords.is_empty() {
            return Err(TriageError::NoKeywords);
        }
        Ok(KeywordRules { keywords, cues: BACKGROUND_CUES.iter().map(|s| s.to_string()).collect() })
    }

    fn mentions(&self, text: &str) -> bool {
        let terms = token_terms(text);
        self.keywords.iter().any(|kw| terms.windows(kw.len()).any(|w| w.iter().zip(kw).all(|(a, b)| a == b)))
    }

    fn has_cue(&self, text: &str) -> bool {
        token_terms(text).iter().any(|t| self.cues.contains(t))
    }
}

/// Reports which record fields mention a keyword.
pub fn keyword_prefilter(record: &CitationRecord, rules: &KeywordRules) -> Prefilter {
    let mut hit = BTreeSet::new();
    if rules.mentions(&record.title) {
        hit.insert(Field::Title);
    }
    if rules.mentions(&record.abstract_text) {
        hit.insert(Field::Abstract);
    }
    if record.keywords.iter().any(|k| rules.mentions(k)) {
        hit.insert(Field::Keywords);
    }
    if record.mesh_terms.iter().any(|k| rules.mentions(k)) {
        hit.insert(Field::Mesh);
    }
    if rules.mentions(&record.funding_text) {
        hit.insert(Field::FundingText);
    }
    if hit.is_empty() {
        Prefilter::NoMention
    } else {
        Prefilter::Mention(hit)
    }
}

/// Splits on `.`, `?` or `!` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '?' | '!') {
            if let Some((_, next)) = iter.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let s = text[start..end].trim();
                    if !s.is_empty() {
                        out.push(s);
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionCategory {
    /// Findings are unrelated to the target topic.
    UnrelatedFindings = 1,
    /// Target topic only introduced as background.
    Background = 2,
    /// Mention outside the main text, e.g. the funding statement.
    OutsideMainText = 3,
}

impl ExclusionCategory {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::UnrelatedFindings),
            2 => Some(Self::Background),
            3 => Some(Self::OutsideMainText),
            _ => None,
        }
    }
}

impl Serialize for ExclusionCategory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for ExclusionCategory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        Self::from_code(code).ok_or_else(|| serde::de::Error::custom(format!("bad exclusion category {code}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub pmid: u64,
    pub relevant: bool,
    pub score: f64,
    pub exclusion_category: Option<ExclusionCategory>,
    pub rationale: String,
}

impl TriageDecision {
    /// `pmid<TAB>relevant<TAB>score<TAB>category`
    pub fn tsv_row(&self) -> String {
        let cat = self.exclusion_category.map(|c| c.code().to_string()).unwrap_or_else(|| "none".into());
        format!("{}\t{}\t{:.6}\t{}", self.pmid, self.relevant, self.score, cat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriageHyper {
    pub gd: Hyper,
    pub min_df: u64,
    pub stop_words: bool,
    pub threshold: f64,
}

impl Default for TriageHyper {
    fn default() -> Self {
        TriageHyper { gd: Hyper::default(), min_df: 1, stop_words: false, threshold: 0.5 }
    }
}

/// Logistic relevance model over TF-IDF unigrams.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub featurizer: Featurizer,
    pub head: LogisticHead,
    pub threshold: f64,
    pub hyper: Hyper,
    /// Fingerprint of the (pmid, label) training set.
    pub trained_on: String,
}

impl LinearModel {
    pub fn score(&self, record: &CitationRecord) -> f64 {
        self.head.probability(&self.featurizer.transform(&record.text()))
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), TriageError> {
        let mut meta = BTreeMap::new();
        meta.insert("kind".into(), "triage".into());
        meta.insert("threshold".into(), format!("{:?}", self.threshold));
        meta.insert("learning_rate".into(), format!("{:?}", self.hyper.learning_rate));
        meta.insert("epochs".into(), self.hyper.epochs.to_string());
        meta.insert("l2".into(), format!("{:?}", self.hyper.l2));
        meta.insert("trained_on".into(), self.trained_on.clone());
        let art = LinearArtifact { meta, featurizer: self.featurizer.clone(), heads: vec![self.head.clone()] };
        Ok(art.write(w)?)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, TriageError> {
        let mut art = LinearArtifact::read(r)?;
        if art.meta_value("kind")? != "triage" || art.heads.len() != 1 {
            return Err(ModelIoError::Format("not a triage model".into()).into());
        }
        let threshold: f64 = art.meta_parse("threshold")?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ModelIoError::Format(format!("threshold {threshold} outside (0,1)")).into());
        }
        let hyper = Hyper {
            learning_rate: art.meta_parse("learning_rate")?,
            epochs: art.meta_parse("epochs")?,
            l2: art.meta_parse("l2")?,
        };
        let trained_on = art.meta_value("trained_on")?.to_string();
        Ok(LinearModel { featurizer: art.featurizer, head: art.heads.remove(0), threshold, hyper, trained_on })
    }
}

/// Fingerprint of labeled pmids, independent of input order.
pub fn dataset_fingerprint<'a, I: IntoIterator<Item = (u64, &'a str)>>(items: I) -> String {
    let mut rows: Vec<String> = items.into_iter().map(|(p, l)| format!("{p}:{l}")).collect();
    rows.sort();
    content_hash(rows.iter().map(String::as_str))
}

/// Training result with the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainedTriage {
    pub model: LinearModel,
    pub loss_history: Vec<f64>,
}

/// Reads record lines carrying a boolean `relevant` key.
pub fn read_labeled<R: BufRead>(r: R) -> Result<Vec<(CitationRecord, bool)>, TriageError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| TriageError::DataFormat { line: i + 1, reason };
        let record = crate::corpus::parse_record(&line).map_err(|e| err(e.to_string()))?;
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let relevant =
            v.get("relevant").and_then(|x| x.as_bool()).ok_or_else(|| err("missing boolean relevant".into()))?;
        out.push((record, relevant));
    }
    Ok(out)
}

pub fn train_triage(labeled: &[(CitationRecord, bool)], hyper: &TriageHyper) -> Result<TrainedTriage, TriageError> {
    if !(hyper.threshold > 0.0 && hyper.threshold < 1.0) {
        return Err(TrainError::BadHyper(format!("threshold {}", hyper.threshold)).into());
    }
    let ys: Vec<bool> = labeled.iter().map(|(_, y)| *y).collect();
    if !(ys.iter().any(|y| *y) && ys.iter().any(|y| !*y)) {
        return Err(TrainError::SingleClassDataset.into());
    }
    hyper.gd.validate()?;
    let texts: Vec<String> = labeled.iter().map(|(r, _)| r.text()).collect();
    let stop = hyper.stop_words.then(default_stop_words);
    let featurizer =
        Featurizer::fit(texts.iter().map(String::as_str), NGrams::Unigram, Weighting::TfIdf, hyper.min_df, stop)?;
    let xs: Vec<_> = texts.iter().map(|t| featurizer.transform(t)).collect();
    let trained = train_joint(&xs, &[ys], featurizer.dim(), &hyper.gd)?;
    let trained_on = dataset_fingerprint(labeled.iter().map(|(r, y)| (r.pmid, if *y { "1" } else { "0" })));
    let head = trained.heads.into_iter().next().expect("one head");
    Ok(TrainedTriage {
        model: LinearModel { featurizer, head, threshold: hyper.threshold, hyper: hyper.gd, trained_on },
        loss_history: trained.loss_history,
    })
}

fn exclusion_for(
    record: &CitationRecord,
    fields: &BTreeSet<Field>,
    rules: &KeywordRules,
) -> (ExclusionCategory, String) {
    if fields.len() == 1 && fields.contains(&Field::FundingText) {
        return (ExclusionCategory::OutsideMainText, "keywords only in the funding statement".into());
    }
    if fields.len() == 1 && fields.contains(&Field::Abstract) {
        let mentioning: Vec<&str> =
            split_sentences(&record.abstract_text).into_iter().filter(|s| rules.mentions(s)).collect();
        if mentioning.len() == 1 && rules.has_cue(mentioning[0]) {
            return (ExclusionCategory::Background, "keywords only in one background sentence".into());
        }
    }
    (ExclusionCategory::UnrelatedFindings, "keywords mentioned but findings unrelated".into())
}

pub fn triage(
    record: &CitationRecord,
    model: Option<&LinearModel>,
    rules: &KeywordRules,
) -> Result<TriageDecision, TriageError> {
    let model = model.ok_or(TriageError::ModelMissing)?;
    let fields = match keyword_prefilter(record, rules) {
        Prefilter::NoMention => {
            return Ok(TriageDecision {
                pmid: record.pmid,
                relevant: false,
                score: 0.0,
                exclusion_category: Some(ExclusionCategory::UnrelatedFindings),
                rationale: "no keyword mention".into(),
            })
        }
        Prefilter::Mention(fields) => fields,
    };
    let score = model.score(record);
    if score >= model.threshold {
        let hit: Vec<String> = fields.iter().map(Field::to_string).collect();
        return Ok(TriageDecision {
            pmid: record.pmid,
            relevant: true,
            score,
            exclusion_category: None,
            rationale: format!("score above threshold; keywords in {}", hit.join(",")),
        });
    }
    let (category, rationale) = exclusion_for(record, &fields, rules);
    Ok(TriageDecision { pmid: record.pmid, relevant: false, score, exclusion_category: Some(category), rationale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn rec(pmid: u64, title: &str, abs: &str) -> CitationRecord {
        CitationRecord::new(pmid, title, abs, NaiveDate::from_ymd_opt(2022, 1, 1).unwrap())
    }

    /// Model that scores every record at `sigmoid(bias)`.
    fn constant_model(bias: f64) -> LinearModel {
        let featurizer = Featurizer::fit(["x"], NGrams::Unigram, Weighting::TfIdf, 1, None).unwrap();
        LinearModel {
            featurizer,
            head: LogisticHead { weights: vec![0.0], bias },
            threshold: 0.5,
            hyper: Hyper::default(),
            trained_on: String::new(),
        }
    }

    #[test]
    fn prefilter_fields() {
        let rules = KeywordRules::default();
        let tb = rec(
            35926511,
            "Immune responses in tuberculosis",
            "Tuberculosis is caused by the bacterium Mycobacterium tuberculosis (Mtb) and is ranked as the second killer infectious disease after COVID-19.",
        );
        assert_eq!(keyword_prefilter(&tb, &rules), Prefilter::Mention([Field::Abstract].into()));

        let flu = rec(2, "Influenza burden in winter", "Seasonal influenza remains a major cause of illness.");
        assert_eq!(keyword_prefilter(&flu, &rules), Prefilter::NoMention);

        let mut funded = rec(36044171, "Soil microbiome survey", "We sampled soils.");
        funded.funding_text = "Supported by a COVID-19 relief grant.".into();
        assert_eq!(keyword_prefilter(&funded, &rules), Prefilter::Mention([Field::FundingText].into()));
    }

    #[test]
    fn prefilter_is_token_bounded() {
        let rules = KeywordRules::new(["ncov"]).unwrap();
        assert_eq!(keyword_prefilter(&rec(1, "encoving ncovid", ""), &rules), Prefilter::NoMention);
        let multi = KeywordRules::new(["novel coronavirus"]).unwrap();
        assert!(matches!(
            keyword_prefilter(&rec(1, "A Novel Coronavirus outbreak", ""), &multi),
            Prefilter::Mention(_)
        ));
        assert_eq!(keyword_prefilter(&rec(1, "a novel treatment for coronavirus", ""), &multi), Prefilter::NoMention);
        assert!(matches!(KeywordRules::new(Vec::<&str>::new()), Err(TriageError::NoKeywords)));
    }

    #[test]
    fn sentence_split() {
        assert_eq!(split_sentences("One. Two? Three! b.1.351 stays"), ["One.", "Two?", "Three!", "b.1.351 stays"]);
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn categories() {
        let rules = KeywordRules::default();
        let low = constant_model(-3.0);
        let tb = rec(
            35926511,
            "Immune responses in tuberculosis",
            "Tuberculosis is ranked as the second killer infectious disease after COVID-19. We profiled T cells.",
        );
        let d = triage(&tb, Some(&low), &rules).unwrap();
        assert!(!d.relevant);
        assert_eq!(d.exclusion_category, Some(ExclusionCategory::Background));

        let mut funded = rec(36044171, "Soil microbiome survey", "We sampled soils.");
        funded.funding_text = "Supported by a COVID-19 relief grant.".into();
        assert_eq!(
            triage(&funded, Some(&low), &rules).unwrap().exclusion_category,
            Some(ExclusionCategory::OutsideMainText)
        );

        let before = rec(
            35203081,
            "Hospital staffing trends",
            "Our analysis was completed before the COVID-19 outbreak. Staffing fell. COVID-19 was not assessed.",
        );
        assert_eq!(
            triage(&before, Some(&low), &rules).unwrap().exclusion_category,
            Some(ExclusionCategory::UnrelatedFindings)
        );

        let none = rec(3, "Influenza", "Flu only.");
        let d = triage(&none, Some(&low), &rules).unwrap();
        assert_eq!(
            (d.relevant, d.score, d.exclusion_category),
            (false, 0.0, Some(ExclusionCategory::UnrelatedFindings))
        );

        let high = constant_model(3.0);
        let d = triage(&tb, Some(&high), &rules).unwrap();
        assert!(d.relevant);
        assert_eq!(d.exclusion_category, None);
    }

    #[test]
    fn model_missing() {
        assert!(matches!(triage(&rec(1, "x", ""), None, &KeywordRules::default()), Err(TriageError::ModelMissing)));
    }

    #[test]
    fn single_class() {
        let data = vec![(rec(1, "covid-19 a", ""), true), (rec(2, "covid-19 b", ""), true)];
        assert!(matches!(
            train_triage(&data, &TriageHyper::default()),
            Err(TriageError::Train(TrainError::SingleClassDataset))
        ));
    }

    #[test]
    fn separable_toy_set_is_learned() {
        // class = presence of the marker token "zqmarker"
        let data: Vec<(CitationRecord, bool)> = (0..20)
            .map(|i| {
                let pos = i % 2 == 0;
                let filler = ["cohort", "patients", "analysis", "outcomes", "study"][i % 5];
                let body =
                    if pos { format!("zqmarker {filler} covid-19") } else { format!("{filler} covid-19 results") };
                (rec(i as u64 + 1, &format!("Report {i}"), &body), pos)
            })
            .collect();
        let trained = train_triage(&data, &TriageHyper::default()).unwrap();
        let correct = data.iter().filter(|(r, y)| (trained.model.score(r) >= 0.5) == *y).count();
        assert_eq!(correct, data.len());
        for w in trained.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let mut buf = Vec::new();
        trained.model.write(&mut buf).unwrap();
        assert_eq!(LinearModel::read(&buf[..]).unwrap(), trained.model);
    }

    #[test]
    fn tsv_row_format() {
        let d = TriageDecision {
            pmid: 5,
            relevant: false,
            score: 0.25,
            exclusion_category: Some(ExclusionCategory::Background),
            rationale: String::new(),
        };
        assert_eq!(d.tsv_row(), "5\tfalse\t0.250000\t2");
    }
}
