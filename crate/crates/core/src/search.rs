//! Inverted index with faceted filtering and BM25 ranking.
//!
//! Filters combine as OR within a facet and AND across facets. Text matching
//! is conjunctive: every query term must occur in the title or abstract.
//! Title tokens count twice, both in term frequency and in document length.
//! All collection statistics are integers, so an index grown by updates
//! scores exactly like one rebuilt from scratch.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CitationRecord;
use crate::text::token_terms;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("unknown facet {0:?}")]
    BadFacet(String),
    #[error("bad page: {0}")]
    BadPage(String),
    #[error("annotation for pmid {0} has no record")]
    AnnotationMismatch(u64),
    #[error("bad query: {0}")]
    BadQuery(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Topic,
    Variant,
    Vaccine,
    Drug,
    Journal,
}

impl Facet {
    pub const ALL: [Facet; 5] = [Facet::Topic, Facet::Variant, Facet::Vaccine, Facet::Drug, Facet::Journal];

    pub fn name(self) -> &'static str {
        match self {
            Facet::Topic => "topic",
            Facet::Variant => "variant",
            Facet::Vaccine => "vaccine",
            Facet::Drug => "drug",
            Facet::Journal => "journal",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Facet {
    type Err = SearchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "topic" | "topics" => Ok(Facet::Topic),
            "variant" | "variants" | "strain" => Ok(Facet::Variant),
            "vaccine" | "vaccines" => Ok(Facet::Vaccine),
            "drug" | "drugs" => Ok(Facet::Drug),
            "journal" => Ok(Facet::Journal),
            _ => Err(SearchError::BadFacet(s.to_string())),
        }
    }
}

/// Annotation-derived facet values for one record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocAnnotations {
    pub topics: BTreeSet<String>,
    pub variants: BTreeSet<String>,
    pub vaccines: BTreeSet<String>,
    pub drugs: BTreeSet<String>,
    /// Included in the Long COVID collection by prediction only.
    #[serde(default)]
    pub provisional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedDocument {
    pub pmid: u64,
    pub title: String,
    pub journal: String,
    pub pub_date: NaiveDate,
    pub annotations: DocAnnotations,
    /// Weighted length: twice the title tokens plus the abstract tokens.
    pub length: u64,
    #[serde(skip)]
    term_freqs: BTreeMap<String, u32>,
}

impl IndexedDocument {
    fn new(record: &CitationRecord, annotations: DocAnnotations) -> Self {
        let mut term_freqs: BTreeMap<String, u32> = BTreeMap::new();
        let title = token_terms(&record.title);
        let abstract_terms = token_terms(&record.abstract_text);
        for t in &title {
            *term_freqs.entry(t.clone()).or_default() += 2;
        }
        for t in &abstract_terms {
            *term_freqs.entry(t.clone()).or_default() += 1;
        }
        IndexedDocument {
            pmid: record.pmid,
            title: record.title.clone(),
            journal: record.journal.clone(),
            pub_date: record.pub_date,
            annotations,
            length: 2 * title.len() as u64 + abstract_terms.len() as u64,
            term_freqs,
        }
    }

    pub fn facet_values(&self, facet: Facet) -> Vec<&str> {
        let a = &self.annotations;
        match facet {
            Facet::Topic => a.topics.iter().map(String::as_str).collect(),
            Facet::Variant => a.variants.iter().map(String::as_str).collect(),
            Facet::Vaccine => a.vaccines.iter().map(String::as_str).collect(),
            Facet::Drug => a.drugs.iter().map(String::as_str).collect(),
            Facet::Journal => vec![self.journal.as_str()],
        }
    }

    pub fn term_frequency(&self, term: &str) -> u32 {
        self.term_freqs.get(term).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sort {
    Relevance,
    #[default]
    DateDesc,
}

impl FromStr for Sort {
    type Err = SearchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevance" => Ok(Sort::Relevance),
            "date" | "date_desc" => Ok(Sort::DateDesc),
            other => Err(SearchError::BadQuery(format!("unknown sort {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetQuery {
    pub text: String,
    pub filters: BTreeMap<Facet, BTreeSet<String>>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub page: usize,
    pub page_size: usize,
    pub sort: Sort,
}

impl Default for FacetQuery {
    fn default() -> Self {
        FacetQuery {
            text: String::new(),
            filters: BTreeMap::new(),
            from: None,
            to: None,
            page: 1,
            page_size: 20,
            sort: Sort::DateDesc,
        }
    }
}

impl FacetQuery {
    pub fn text(text: &str) -> Self {
        FacetQuery { text: text.to_string(), ..Default::default() }
    }

    pub fn with_filter(mut self, facet: Facet, value: &str) -> Self {
        self.filters.entry(facet).or_default().insert(value.to_string());
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.page < 1 {
            return Err(SearchError::BadPage(format!("page {} < 1", self.page)));
        }
        if !(1..=MAX_PAGE_SIZE).contains(&self.page_size) {
            return Err(SearchError::BadPage(format!("page size {} outside 1..={MAX_PAGE_SIZE}", self.page_size)));
        }
        Ok(())
    }
}

/// Splits on whitespace outside double quotes and strips the quotes.
fn split_quoted(s: &str) -> Result<Vec<String>, SearchError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut any = false;
    for c in s.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                any = true;
            }
            c if c.is_whitespace() && !quoted => {
                if any {
                    out.push(std::mem::take(&mut cur));
                    any = false;
                }
            }
            c => {
                cur.push(c);
                any = true;
            }
        }
    }
    if quoted {
        return Err(SearchError::BadQuery("unbalanced quote".into()));
    }
    if any {
        out.push(cur);
    }
    Ok(out)
}

fn parse_date(key: &str, value: &str) -> Result<NaiveDate, SearchError> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map_err(|_| SearchError::BadQuery(format!("{key}: expected YYYY-MM-DD, got {value:?}")))
}

/// Parses `free text facet:value facet:"quoted value" from:YYYY-MM-DD to:...`.
///
/// A word is a filter when the part before its first colon is purely
/// alphabetic; unknown names are rejected rather than searched as text.
pub fn parse_query(s: &str) -> Result<FacetQuery, SearchError> {
    let mut q = FacetQuery::default();
    let mut text = Vec::new();
    for word in split_quoted(s)? {
        let filter = word
            .split_once(':')
            .filter(|(k, _)| !k.is_empty() && k.chars().all(|c| c.is_ascii_alphabetic() || c == '_'));
        match filter {
            Some((key, value)) => match key.to_ascii_lowercase().as_str() {
                "from" => q.from = Some(parse_date(key, value)?),
                "to" => q.to = Some(parse_date(key, value)?),
                _ => {
                    let facet: Facet = key.parse()?;
                    if value.is_empty() {
                        return Err(SearchError::BadQuery(format!("empty value for {key}")));
                    }
                    q.filters.entry(facet).or_default().insert(value.to_string());
                }
            },
            None => text.push(word),
        }
    }
    q.text = text.join(" ");
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub pmid: u64,
    pub score: f64,
    pub pub_date: NaiveDate,
    pub title: String,
    pub journal: String,
    pub provisional: bool,
}

pub type FacetCounts = BTreeMap<Facet, BTreeMap<String, usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub hits: Vec<Hit>,
    pub facets: FacetCounts,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Index {
    docs: BTreeMap<u64, IndexedDocument>,
    postings: BTreeMap<String, BTreeSet<u64>>,
    facet_postings: BTreeMap<(Facet, String), BTreeSet<u64>>,
    total_length: u64,
}

impl Index {
    pub fn build<'a, I>(records: I, annotations: &BTreeMap<u64, DocAnnotations>) -> Result<Self, SearchError>
    where
        I: IntoIterator<Item = &'a CitationRecord>,
    {
        Index::default().update(records, annotations)
    }

    /// New index with `records` added or replaced. Annotations may also
    /// target records already indexed.
    pub fn update<'a, I>(&self, records: I, annotations: &BTreeMap<u64, DocAnnotations>) -> Result<Self, SearchError>
    where
        I: IntoIterator<Item = &'a CitationRecord>,
    {
        let records: BTreeMap<u64, &CitationRecord> = records.into_iter().map(|r| (r.pmid, r)).collect();
        if let Some(p) = annotations.keys().find(|p| !records.contains_key(p) && !self.docs.contains_key(p)) {
            return Err(SearchError::AnnotationMismatch(*p));
        }
        let mut next = self.clone();
        for (pmid, record) in &records {
            let ann = annotations
                .get(pmid)
                .cloned()
                .or_else(|| self.docs.get(pmid).map(|d| d.annotations.clone()))
                .unwrap_or_default();
            next.remove(*pmid);
            next.insert(IndexedDocument::new(record, ann));
        }
        for (pmid, ann) in annotations {
            if records.contains_key(pmid) {
                continue;
            }
            let mut doc = next.remove(*pmid).expect("checked above");
            doc.annotations = ann.clone();
            next.insert(doc);
        }
        Ok(next)
    }

    /// New index without the given documents.
    pub fn without<I: IntoIterator<Item = u64>>(&self, pmids: I) -> Self {
        let mut next = self.clone();
        for p in pmids {
            next.remove(p);
        }
        next
    }

    /// One JSON line per document in pmid order. Equal indexes dump to equal
    /// bytes.
    pub fn write_dump<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for doc in self.docs.values() {
            serde_json::to_writer(&mut w, doc)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn insert(&mut self, doc: IndexedDocument) {
        for term in doc.term_freqs.keys() {
            self.postings.entry(term.clone()).or_default().insert(doc.pmid);
        }
        for facet in Facet::ALL {
            for v in doc.facet_values(facet) {
                self.facet_postings.entry((facet, v.to_string())).or_default().insert(doc.pmid);
            }
        }
        self.total_length += doc.length;
        self.docs.insert(doc.pmid, doc);
    }

    fn remove(&mut self, pmid: u64) -> Option<IndexedDocument> {
        let doc = self.docs.remove(&pmid)?;
        for term in doc.term_freqs.keys() {
            if let Some(set) = self.postings.get_mut(term) {
                set.remove(&pmid);
                if set.is_empty() {
                    self.postings.remove(term);
                }
            }
        }
        for facet in Facet::ALL {
            for v in doc.facet_values(facet) {
                let key = (facet, v.to_string());
                if let Some(set) = self.facet_postings.get_mut(&key) {
                    set.remove(&pmid);
                    if set.is_empty() {
                        self.facet_postings.remove(&key);
                    }
                }
            }
        }
        self.total_length -= doc.length;
        Some(doc)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, pmid: u64) -> Option<&IndexedDocument> {
        self.docs.get(&pmid)
    }

    pub fn docs(&self) -> impl Iterator<Item = &IndexedDocument> {
        self.docs.values()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeSet::len)
    }

    pub fn average_length(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.docs.len() as f64
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 of `doc` for the (deduplicated) query terms.
    pub fn bm25(&self, doc: &IndexedDocument, terms: &[String]) -> f64 {
        let avg = self.average_length();
        let norm = if avg > 0.0 { doc.length as f64 / avg } else { 0.0 };
        terms
            .iter()
            .map(|t| {
                let tf = doc.term_frequency(t) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * norm))
            })
            .sum()
    }

    /// Documents passing every filter except those on `skip`.
    fn filtered(&self, q: &FacetQuery, terms: &[String], skip: Option<Facet>) -> BTreeSet<u64> {
        let mut sets: Vec<BTreeSet<u64>> = Vec::new();
        for (facet, values) in &q.filters {
            if Some(*facet) == skip || values.is_empty() {
                continue;
            }
            let mut union = BTreeSet::new();
            for v in values {
                if let Some(s) = self.facet_postings.get(&(*facet, v.clone())) {
                    union.extend(s.iter().copied());
                }
            }
            sets.push(union);
        }
        for t in terms {
            sets.push(self.postings.get(t).cloned().unwrap_or_default());
        }
        sets.sort_by_key(BTreeSet::len);
        let mut iter = sets.into_iter();
        let mut hits: BTreeSet<u64> = match iter.next() {
            Some(first) => first,
            None => self.docs.keys().copied().collect(),
        };
        for s in iter {
            hits.retain(|p| s.contains(p));
        }
        if q.from.is_some() || q.to.is_some() {
            hits.retain(|p| {
                let d = self.docs[p].pub_date;
                q.from.is_none_or(|f| d >= f) && q.to.is_none_or(|t| d <= t)
            });
        }
        hits
    }

    /// Every hit in final order, without paging.
    pub fn ranked(&self, q: &FacetQuery) -> Result<Vec<Hit>, SearchError> {
        let terms = query_terms(&q.text);
        let mut hits: Vec<Hit> = self
            .filtered(q, &terms, None)
            .into_iter()
            .map(|p| {
                let d = &self.docs[&p];
                Hit {
                    pmid: p,
                    score: if terms.is_empty() { 0.0 } else { self.bm25(d, &terms) },
                    pub_date: d.pub_date,
                    title: d.title.clone(),
                    journal: d.journal.clone(),
                    provisional: d.annotations.provisional,
                }
            })
            .collect();
        let by_date = |a: &Hit, b: &Hit| b.pub_date.cmp(&a.pub_date).then(b.pmid.cmp(&a.pmid));
        match q.sort {
            Sort::Relevance => hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| by_date(a, b))),
            Sort::DateDesc => hits.sort_by(by_date),
        }
        Ok(hits)
    }

    /// Per-facet value counts, each facet computed with its own filter
    /// removed.
    pub fn facet_counts(&self, q: &FacetQuery) -> Result<FacetCounts, SearchError> {
        let terms = query_terms(&q.text);
        let mut out = FacetCounts::new();
        for facet in Facet::ALL {
            let counts = out.entry(facet).or_default();
            for p in self.filtered(q, &terms, Some(facet)) {
                for v in self.docs[&p].facet_values(facet) {
                    *counts.entry(v.to_string()).or_default() += 1;
                }
            }
        }
        Ok(out)
    }

    pub fn search(&self, q: &FacetQuery) -> Result<SearchResult, SearchError> {
        q.validate()?;
        let all = self.ranked(q)?;
        let total = all.len();
        let hits = all.into_iter().skip((q.page - 1).saturating_mul(q.page_size)).take(q.page_size).collect();
        Ok(SearchResult { total, page: q.page, page_size: q.page_size, hits, facets: self.facet_counts(q)? })
    }
}

/// Query terms in first-occurrence order without repeats.
pub fn query_terms(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    token_terms(text).into_iter().filter(|t| seen.insert(t.clone())).collect()
}
