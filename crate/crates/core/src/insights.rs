//! Collection analytics: growth series, share of a baseline, topic
//! co-occurrence and trending articles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TRENDING: usize = 6;

#[derive(Debug, Error)]
pub enum InsightsError {
    #[error("period {0:?} does not match the series granularity or is missing from the baseline")]
    PeriodMismatch(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Month,
    Quarter,
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" | "daily" => Ok(Granularity::Day),
            "month" | "monthly" => Ok(Granularity::Month),
            "quarter" | "quarterly" => Ok(Granularity::Quarter),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Day => "day",
            Granularity::Month => "month",
            Granularity::Quarter => "quarter",
        })
    }
}

impl Granularity {
    /// First day of the period containing `d`.
    pub fn start(self, d: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => d,
            Granularity::Month => d.with_day(1).expect("day 1 exists"),
            Granularity::Quarter => {
                NaiveDate::from_ymd_opt(d.year(), (d.month0() / 3) * 3 + 1, 1).expect("quarter start exists")
            }
        }
    }

    fn next(self, start: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => start + Duration::days(1),
            Granularity::Month => start.checked_add_months(chrono::Months::new(1)).expect("date in range"),
            Granularity::Quarter => start.checked_add_months(chrono::Months::new(3)).expect("date in range"),
        }
    }

    /// `2020-03-01`, `2020-03` or `2020-Q1`.
    pub fn label(self, start: NaiveDate) -> String {
        match self {
            Granularity::Day => start.format("%Y-%m-%d").to_string(),
            Granularity::Month => start.format("%Y-%m").to_string(),
            Granularity::Quarter => format!("{}-Q{}", start.year(), start.month0() / 3 + 1),
        }
    }

    pub fn parse_label(self, label: &str) -> Option<NaiveDate> {
        let d = match self {
            Granularity::Day => NaiveDate::parse_from_str(label, "%Y-%m-%d").ok()?,
            Granularity::Month => NaiveDate::parse_from_str(&format!("{label}-01"), "%Y-%m-%d").ok()?,
            Granularity::Quarter => {
                let (y, q) = label.split_once("-Q")?;
                let q: u32 = q.parse().ok().filter(|q| (1..=4).contains(q))?;
                NaiveDate::from_ymd_opt(y.parse().ok()?, (q - 1) * 3 + 1, 1)?
            }
        };
        (self.label(d) == label).then_some(d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub period: String,
    pub new: usize,
    pub cumulative: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub granularity: Granularity,
    pub rows: Vec<GrowthRow>,
}

impl GrowthSeries {
    pub fn total(&self) -> usize {
        self.rows.last().map_or(0, |r| r.cumulative)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["period", "new", "cumulative"])?;
        for r in &self.rows {
            out.write_record([r.period.clone(), r.new.to_string(), r.cumulative.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Buckets dates by period, emitting zero rows for gaps between the first and
/// last period.
pub fn growth<I: IntoIterator<Item = NaiveDate>>(dates: I, granularity: Granularity) -> GrowthSeries {
    let mut counts: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for d in dates {
        *counts.entry(granularity.start(d)).or_default() += 1;
    }
    let mut rows = Vec::new();
    if let (Some(&first), Some(&last)) = (counts.keys().next(), counts.keys().next_back()) {
        let mut cumulative = 0;
        let mut p = first;
        while p <= last {
            let new = counts.get(&p).copied().unwrap_or(0);
            cumulative += new;
            rows.push(GrowthRow { period: granularity.label(p), new, cumulative });
            p = granularity.next(p);
        }
    }
    GrowthSeries { granularity, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub period: String,
    pub collection: usize,
    pub baseline: u64,
    /// `None` when the baseline is zero.
    pub ratio: Option<f64>,
}

/// Per-period collection/baseline ratio over the baseline's periods. Every
/// collection period with articles must appear in the baseline.
pub fn share_ratio(
    collection: &GrowthSeries,
    baseline: &BTreeMap<String, u64>,
) -> Result<Vec<ShareRow>, InsightsError> {
    let g = collection.granularity;
    let mut periods: BTreeMap<NaiveDate, (&str, u64)> = BTreeMap::new();
    for (label, count) in baseline {
        let start = g.parse_label(label).ok_or_else(|| InsightsError::PeriodMismatch(label.clone()))?;
        periods.insert(start, (label, *count));
    }
    let new_by_period: BTreeMap<&str, usize> = collection.rows.iter().map(|r| (r.period.as_str(), r.new)).collect();
    if let Some(r) = collection.rows.iter().find(|r| r.new > 0 && !baseline.contains_key(&r.period)) {
        return Err(InsightsError::PeriodMismatch(r.period.clone()));
    }
    Ok(periods
        .into_values()
        .map(|(label, base)| {
            let c = new_by_period.get(label).copied().unwrap_or(0);
            ShareRow {
                period: label.to_string(),
                collection: c,
                baseline: base,
                ratio: (base > 0).then(|| c as f64 / base as f64),
            }
        })
        .collect())
}

/// `period<TAB>count` lines.
pub fn read_baseline<R: BufRead>(r: R) -> Result<BTreeMap<String, u64>, InsightsError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (i == 0 && t.starts_with("period")) {
            continue;
        }
        let err = |reason: String| InsightsError::Format { line: i + 1, reason };
        let (p, c) = t.split_once('\t').ok_or_else(|| err("expected period<TAB>count".into()))?;
        out.insert(p.trim().to_string(), c.trim().parse().map_err(|_| err(format!("bad count {c:?}")))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub topics: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl CooccurrenceMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<usize> {
        let i = self.topics.iter().position(|t| t == a)?;
        let j = self.topics.iter().position(|t| t == b)?;
        Some(self.counts[i][j])
    }
}

/// Pairwise article counts over `topics`; labels outside `topics` are ignored.
pub fn cooccurrence<'a, I>(annotations: I, topics: &[String]) -> CooccurrenceMatrix
where
    I: IntoIterator<Item = &'a BTreeSet<String>>,
{
    let k = topics.len();
    let mut counts = vec![vec![0; k]; k];
    for a in annotations {
        let present: Vec<usize> = (0..k).filter(|&i| a.contains(&topics[i])).collect();
        for &i in &present {
            for &j in &present {
                counts[i][j] += 1;
            }
        }
    }
    CooccurrenceMatrix { topics: topics.to_vec(), counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendingItem {
    pub pmid: u64,
    pub score: f64,
}

/// External trending list filtered to the collection, best score first
/// (ties by pmid), at most `n` items. A pmid listed twice keeps its best
/// score.
pub fn trending(collection: &BTreeSet<u64>, external: &[(u64, f64)], n: usize) -> Vec<TrendingItem> {
    let mut best: BTreeMap<u64, f64> = BTreeMap::new();
    for &(pmid, score) in external {
        if !collection.contains(&pmid) || score.is_nan() {
            continue;
        }
        let e = best.entry(pmid).or_insert(score);
        if score > *e {
            *e = score;
        }
    }
    let mut items: Vec<TrendingItem> = best.into_iter().map(|(pmid, score)| TrendingItem { pmid, score }).collect();
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.pmid.cmp(&b.pmid)));
    items.truncate(n);
    items
}

/// `pmid<TAB>score` lines.
pub fn read_trending<R: BufRead>(r: R) -> Result<Vec<(u64, f64)>, InsightsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (i == 0 && t.starts_with("pmid")) {
            continue;
        }
        let err = |reason: String| InsightsError::Format { line: i + 1, reason };
        let (p, s) = t.split_once('\t').ok_or_else(|| err("expected pmid<TAB>score".into()))?;
        out.push((
            p.trim().parse().map_err(|_| err(format!("bad pmid {p:?}")))?,
            s.trim().parse().map_err(|_| err(format!("bad score {s:?}")))?,
        ));
    }
    Ok(out)
}
