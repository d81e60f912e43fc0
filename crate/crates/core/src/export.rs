//! Citation formatting and collection export.

use std::io::Write;
use std::str::FromStr;

use chrono::Datelike;
use serde_json::Value;

use crate::corpus::CitationRecord;
use crate::search::DocAnnotations;

pub const CSV_HEADER: [&str; 7] = ["pmid", "title", "journal", "pub_date", "topics", "variants", "vaccines"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiteStyle {
    Text,
    Ris,
}

impl FromStr for CiteStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(CiteStyle::Text),
            "ris" => Ok(CiteStyle::Ris),
            other => Err(format!("unknown citation style {other:?}")),
        }
    }
}

pub fn cite(record: &CitationRecord, style: CiteStyle) -> String {
    match style {
        CiteStyle::Text => cite_text(record),
        CiteStyle::Ris => cite_ris(record),
    }
}

/// `Authors. Title. Journal. YYYY. PMID: N.` Empty parts are skipped and
/// trailing periods are not doubled.
pub fn cite_text(record: &CitationRecord) -> String {
    let authors = record.authors.join(", ");
    let year = record.pub_date.year().to_string();
    let pmid = format!("PMID: {}", record.pmid);
    [authors.as_str(), record.title.as_str(), record.journal.as_str(), year.as_str(), pmid.as_str()]
        .iter()
        .map(|p| p.trim().trim_end_matches('.'))
        .filter(|p| !p.is_empty())
        .map(|p| format!("{p}."))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn cite_ris(record: &CitationRecord) -> String {
    let mut out = String::from("TY  - JOUR\n");
    out.push_str(&format!("TI  - {}\n", record.title));
    for a in &record.authors {
        out.push_str(&format!("AU  - {a}\n"));
    }
    out.push_str(&format!("JO  - {}\n", record.journal));
    out.push_str(&format!("PY  - {}\n", record.pub_date.year()));
    out.push_str(&format!("ID  - {}\n", record.pmid));
    out.push_str("ER  - \n");
    out
}

/// One export line: the record in ingest format plus its facet values.
pub fn jsonl_line(record: &CitationRecord, ann: &DocAnnotations) -> String {
    let mut r = record.clone();
    r.ingested_at = None;
    let mut v: Value = serde_json::from_str(&r.to_line()).expect("record lines are valid JSON");
    let obj = v.as_object_mut().expect("record lines are objects");
    obj.insert("topics".into(), Value::from(ann.topics.iter().cloned().collect::<Vec<_>>()));
    obj.insert("variants".into(), Value::from(ann.variants.iter().cloned().collect::<Vec<_>>()));
    obj.insert("vaccines".into(), Value::from(ann.vaccines.iter().cloned().collect::<Vec<_>>()));
    obj.insert("drugs".into(), Value::from(ann.drugs.iter().cloned().collect::<Vec<_>>()));
    v.to_string()
}

pub fn csv_row(record: &CitationRecord, ann: &DocAnnotations) -> [String; 7] {
    let join = |s: &std::collections::BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(";");
    [
        record.pmid.to_string(),
        record.title.clone(),
        record.journal.clone(),
        record.pub_date.format("%Y-%m-%d").to_string(),
        join(&ann.topics),
        join(&ann.variants),
        join(&ann.vaccines),
    ]
}

/// RFC 4180 CSV with a fixed header; multi-valued cells are `;`-joined.
pub fn write_csv<'a, W, I>(w: W, rows: I) -> Result<(), csv::Error>
where
    W: Write,
    I: IntoIterator<Item = (&'a CitationRecord, &'a DocAnnotations)>,
{
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for (r, a) in rows {
        out.write_record(csv_row(r, a))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_record;
    use chrono::NaiveDate;

    fn record() -> CitationRecord {
        let mut r = CitationRecord::new(
            34567890,
            "Omicron, \"boosters\", and you.",
            "Abstract text.",
            NaiveDate::from_ymd_opt(2022, 3, 4).unwrap(),
        );
        r.journal = "Vaccine".into();
        r.authors = vec!["Smith J".into(), "Lee K".into()];
        r
    }

    #[test]
    fn text_style() {
        assert_eq!(
            cite_text(&record()),
            "Smith J, Lee K. Omicron, \"boosters\", and you. Vaccine. 2022. PMID: 34567890."
        );
        let mut anon = record();
        anon.authors.clear();
        assert!(cite_text(&anon).starts_with("Omicron"));
    }

    #[test]
    fn ris_style() {
        let ris = cite_ris(&record());
        let tags: Vec<&str> = ris.lines().map(|l| &l[..2]).collect();
        assert_eq!(tags, ["TY", "TI", "AU", "AU", "JO", "PY", "ID", "ER"]);
        assert!(ris.contains("PY  - 2022\n") && ris.contains("ID  - 34567890\n"));
    }

    #[test]
    fn exports() {
        let r = record();
        let mut a = DocAnnotations::default();
        a.topics.insert("Prevention".into());
        a.variants.insert("STRAIN:Omicron".into());
        a.variants.insert("STRAIN:Delta".into());
        let line = jsonl_line(&r, &a);
        assert_eq!(parse_record(&line).unwrap(), r);
        let mut buf = Vec::new();
        write_csv(&mut buf, [(&r, &a)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.split("\r\n");
        assert_eq!(lines.next().unwrap(), "pmid,title,journal,pub_date,topics,variants,vaccines");
        assert_eq!(
            lines.next().unwrap(),
            "34567890,\"Omicron, \"\"boosters\"\", and you.\",Vaccine,2022-03-04,Prevention,STRAIN:Delta;STRAIN:Omicron,"
        );
    }
}
