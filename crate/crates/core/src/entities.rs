//! Lexicon-driven recognition and normalization of strain, vaccine and funder
//! mentions.
//!
//! Lexicon file layout (tab separated, three sections):
//!
//! ```text
//! #entries
//! surface<TAB>type<TAB>concept_id<TAB>ambiguous(0|1)
//! #concepts
//! concept_id<TAB>type<TAB>canonical name
//! #links
//! vaccine_concept<TAB>funder_concept
//! ```
//!
//! Surfaces are matched over the shared tokenizer, left to right, taking the
//! longest entry that fires at each position. Ambiguous entries fire only when
//! a cue token appears within eight tokens on either side of the mention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CitationRecord;
use crate::text::{token_terms, tokenize, Token};

pub const CUE_WINDOW: usize = 8;
pub const CONTEXT_CUES: [&str; 10] = [
    "variant",
    "variants",
    "strain",
    "strains",
    "lineage",
    "sars-cov-2",
    "covid-19",
    "vaccine",
    "vaccinated",
    "booster",
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("entry {surface:?} references unknown concept {concept}")]
    DanglingConcept { surface: String, concept: String },
    #[error("concept {concept} is a {actual}, entry {surface:?} says {expected}")]
    ConceptTypeMismatch { surface: String, concept: String, expected: EntityType, actual: EntityType },
    #[error("duplicate entry {surface:?} for type {entity_type}")]
    DuplicateSurface { surface: String, entity_type: EntityType },
    #[error("bad link {vaccine} -> {funder}: {reason}")]
    BadLink { vaccine: String, funder: String, reason: String },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("{0} is not a vaccine concept")]
    NotAVaccine(String),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Strain,
    Vaccine,
    Funder,
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityType::Strain => "strain",
            EntityType::Vaccine => "vaccine",
            EntityType::Funder => "funder",
        })
    }
}

impl FromStr for EntityType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strain" => Ok(EntityType::Strain),
            "vaccine" => Ok(EntityType::Vaccine),
            "funder" => Ok(EntityType::Funder),
            other => Err(format!("unknown entity type {other:?}")),
        }
    }
}

/// Token-sequence trie. Each terminal node holds the values for that phrase
/// in insertion order.
#[derive(Debug, Clone)]
pub struct PhraseTrie<V> {
    nodes: Vec<TrieNode<V>>,
}

#[derive(Debug, Clone)]
struct TrieNode<V> {
    children: HashMap<String, usize>,
    values: Vec<V>,
}

impl<V> Default for PhraseTrie<V> {
    fn default() -> Self {
        PhraseTrie { nodes: vec![TrieNode { children: HashMap::new(), values: Vec::new() }] }
    }
}

impl<V> PhraseTrie<V> {
    pub fn insert(&mut self, phrase: &[String], value: V) {
        let mut node = 0;
        for tok in phrase {
            node = match self.nodes[node].children.get(tok) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode { children: HashMap::new(), values: Vec::new() });
                    let id = self.nodes.len() - 1;
                    self.nodes[node].children.insert(tok.clone(), id);
                    id
                }
            };
        }
        self.nodes[node].values.push(value);
    }

    pub fn get(&self, phrase: &[String]) -> &[V] {
        let mut node = 0;
        for tok in phrase {
            match self.nodes[node].children.get(tok) {
                Some(&next) => node = next,
                None => return &[],
            }
        }
        &self.nodes[node].values
    }

    /// All phrases starting at `terms[start]`, shortest first, as
    /// `(token length, values)`.
    pub fn prefixes_at<'a, S: AsRef<str>>(&'a self, terms: &[S], start: usize) -> Vec<(usize, &'a [V])> {
        let mut out = Vec::new();
        let mut node = 0;
        for (offset, tok) in terms[start..].iter().enumerate() {
            match self.nodes[node].children.get(tok.as_ref()) {
                Some(&next) => node = next,
                None => break,
            }
            if !self.nodes[node].values.is_empty() {
                out.push((offset + 1, self.nodes[node].values.as_slice()));
            }
        }
        out
    }

    /// Count of non-overlapping longest matches, scanning left to right.
    pub fn count_longest<S: AsRef<str>>(&self, terms: &[S]) -> usize {
        self.longest_spans(terms).len()
    }

    /// Non-overlapping longest matches as token ranges.
    pub fn longest_spans<S: AsRef<str>>(&self, terms: &[S]) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut i = 0;
        while i < terms.len() {
            match self.prefixes_at(terms, i).last() {
                Some((len, _)) => {
                    spans.push((i, i + len));
                    i += len;
                }
                None => i += 1,
            }
        }
        spans
    }
}

/// Numbered rows per section name.
pub(crate) type Sections = BTreeMap<String, Vec<(usize, Vec<String>)>>;

/// Rows of a sectioned TSV file, keyed by section name.
pub(crate) fn read_sections<R: BufRead>(r: R, sections: &[&str]) -> Result<Sections, LexiconError> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('#') {
            let name = name.trim();
            if sections.contains(&name) {
                current = Some(name.to_string());
                out.entry(name.to_string()).or_default();
            }
            continue;
        }
        let section = current
            .clone()
            .ok_or_else(|| LexiconError::Format { line: line_no, reason: "row before any section header".into() })?;
        out.entry(section).or_default().push((line_no, trimmed.split('\t').map(|s| s.trim().to_string()).collect()));
    }
    Ok(out)
}

/// A flat list of phrases (synonyms, symptoms) matched by token sequence.
///
/// Accepts the lexicon file shape, reading surfaces from the `#entries`
/// section, or a plain file with one phrase per line.
#[derive(Debug, Clone)]
pub struct TermList {
    trie: PhraseTrie<()>,
    terms: Vec<String>,
}

impl TermList {
    pub fn from_phrases<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut trie = PhraseTrie::default();
        let mut terms = BTreeSet::new();
        for p in phrases {
            let toks = token_terms(p.as_ref());
            if toks.is_empty() {
                continue;
            }
            if terms.insert(toks.join(" ")) {
                trie.insert(&toks, ());
            }
        }
        TermList { trie, terms: terms.into_iter().collect() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    pub fn parse<R: BufRead>(r: R) -> Result<Self, LexiconError> {
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let sectioned = lines.iter().any(|l| l.trim() == "#entries");
        let mut in_entries = !sectioned;
        let mut phrases = Vec::new();
        for line in &lines {
            let t = line.trim();
            if let Some(h) = t.strip_prefix('#') {
                if sectioned {
                    in_entries = h.trim() == "entries";
                }
                continue;
            }
            if in_entries && !t.is_empty() {
                phrases.push(t.split('\t').next().unwrap_or_default().to_string());
            }
        }
        Ok(Self::from_phrases(phrases))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Normalized phrases, sorted.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn fingerprint(&self) -> String {
        crate::text::content_hash(self.terms.iter().map(String::as_str))
    }

    /// Non-overlapping longest matches in an already tokenized text.
    pub fn count_in<S: AsRef<str>>(&self, terms: &[S]) -> usize {
        self.trie.count_longest(terms)
    }

    /// Character spans of the matches `count_in` would count in `text`.
    pub fn char_spans(&self, text: &str) -> Vec<(usize, usize)> {
        let tokens = tokenize(text);
        let terms: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
        self.trie.longest_spans(&terms).into_iter().map(|(a, b)| (tokens[a].start, tokens[b - 1].end)).collect()
    }

    pub fn contains_any(&self, text: &str) -> bool {
        self.count_in(&token_terms(text)) > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub surface: String,
    pub entity_type: EntityType,
    pub concept_id: String,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub concept_id: String,
    pub entity_type: EntityType,
    pub canonical_name: String,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    trie: PhraseTrie<LexEntry>,
    entries: Vec<LexEntry>,
    concepts: BTreeMap<String, Concept>,
    links: BTreeMap<String, String>,
    cues: BTreeSet<String>,
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    pub fn parse<R: BufRead>(r: R) -> Result<Self, LexiconError> {
        let sections = read_sections(r, &["entries", "concepts", "links"])?;
        let empty = Vec::new();
        let fmt_err = |line: usize, reason: String| LexiconError::Format { line, reason };

        let mut concepts = BTreeMap::new();
        for (line, cols) in sections.get("concepts").unwrap_or(&empty) {
            let [id, ty, name] = cols.as_slice() else {
                return Err(fmt_err(*line, format!("concept rows need 3 columns, got {}", cols.len())));
            };
            let entity_type: EntityType = ty.parse().map_err(|e| fmt_err(*line, e))?;
            if id.is_empty() {
                return Err(fmt_err(*line, "empty concept id".into()));
            }
            concepts.insert(id.clone(), Concept { concept_id: id.clone(), entity_type, canonical_name: name.clone() });
        }

        let mut trie = PhraseTrie::default();
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (line, cols) in sections.get("entries").unwrap_or(&empty) {
            let [surface, ty, concept, amb] = cols.as_slice() else {
                return Err(fmt_err(*line, format!("entry rows need 4 columns, got {}", cols.len())));
            };
            let entity_type: EntityType = ty.parse().map_err(|e| fmt_err(*line, e))?;
            let ambiguous = match amb.as_str() {
                "0" => false,
                "1" => true,
                other => return Err(fmt_err(*line, format!("ambiguous flag must be 0 or 1, got {other:?}"))),
            };
            let tokens = token_terms(surface);
            if tokens.is_empty() {
                return Err(fmt_err(*line, "empty surface form".into()));
            }
            let key = tokens.join(" ");
            let Some(c) = concepts.get(concept) else {
                return Err(LexiconError::DanglingConcept { surface: surface.clone(), concept: concept.clone() });
            };
            if c.entity_type != entity_type {
                return Err(LexiconError::ConceptTypeMismatch {
                    surface: surface.clone(),
                    concept: concept.clone(),
                    expected: entity_type,
                    actual: c.entity_type,
                });
            }
            if !seen.insert((key.clone(), entity_type)) {
                return Err(LexiconError::DuplicateSurface { surface: key, entity_type });
            }
            let entry = LexEntry { surface: key, entity_type, concept_id: concept.clone(), ambiguous };
            trie.insert(&tokens, entry.clone());
            entries.push(entry);
        }

        let mut links = BTreeMap::new();
        for (line, cols) in sections.get("links").unwrap_or(&empty) {
            let [vaccine, funder] = cols.as_slice() else {
                return Err(fmt_err(*line, format!("link rows need 2 columns, got {}", cols.len())));
            };
            let bad = |reason: &str| LexiconError::BadLink {
                vaccine: vaccine.clone(),
                funder: funder.clone(),
                reason: reason.into(),
            };
            match concepts.get(vaccine) {
                Some(c) if c.entity_type == EntityType::Vaccine => {}
                Some(_) => return Err(bad("source is not a vaccine")),
                None => return Err(bad("unknown vaccine concept")),
            }
            match concepts.get(funder) {
                Some(c) if c.entity_type == EntityType::Funder => {}
                Some(_) => return Err(bad("target is not a funder")),
                None => return Err(bad("unknown funder concept")),
            }
            links.insert(vaccine.clone(), funder.clone());
        }

        Ok(Lexicon { trie, entries, concepts, links, cues: CONTEXT_CUES.iter().map(|s| s.to_string()).collect() })
    }

    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn concept(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    fn cue_near(&self, tokens: &[Token], start: usize, end: usize) -> bool {
        let lo = start.saturating_sub(CUE_WINDOW);
        let hi = (end + CUE_WINDOW).min(tokens.len());
        tokens[lo..start].iter().chain(&tokens[end..hi]).any(|t| self.cues.contains(&t.surface))
    }
}

/// A recognized span within one text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub surface: String,
    pub entity_type: EntityType,
    pub concept_id: String,
}

/// Longest-firing-match scan over `text`.
pub fn recognize(text: &str, lexicon: &Lexicon) -> Vec<Mention> {
    let tokens = tokenize(text);
    let terms: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let candidates = lexicon.trie.prefixes_at(&terms, i);
        let hit = candidates.iter().rev().find_map(|(len, entries)| {
            let end = i + len;
            entries.iter().find(|e| !e.ambiguous || lexicon.cue_near(&tokens, i, end)).map(|e| (end, e))
        });
        match hit {
            Some((end, entry)) => {
                let (cs, ce) = (tokens[i].start, tokens[end - 1].end);
                out.push(Mention {
                    start: cs,
                    end: ce,
                    token_start: i,
                    token_end: end,
                    surface: chars[cs..ce].iter().collect(),
                    entity_type: entry.entity_type,
                    concept_id: entry.concept_id.clone(),
                });
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

/// Concept for a surface form of the given type, ignoring ambiguity gating.
pub fn normalize<'a>(surface: &str, entity_type: EntityType, lexicon: &'a Lexicon) -> Option<&'a str> {
    lexicon.trie.get(&token_terms(surface)).iter().find(|e| e.entity_type == entity_type).map(|e| e.concept_id.as_str())
}

/// Funder linked to a vaccine concept, if any.
pub fn link_funder<'a>(vaccine: &str, lexicon: &'a Lexicon) -> Result<Option<&'a str>, LinkError> {
    match lexicon.concepts.get(vaccine) {
        None => Err(LinkError::UnknownConcept(vaccine.to_string())),
        Some(c) if c.entity_type != EntityType::Vaccine => Err(LinkError::NotAVaccine(vaccine.to_string())),
        Some(_) => Ok(lexicon.links.get(vaccine).map(String::as_str)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    Title,
    Abstract,
}

impl fmt::Display for TextField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextField::Title => "title",
            TextField::Abstract => "abstract",
        })
    }
}

impl FromStr for TextField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "title" => Ok(TextField::Title),
            "abstract" => Ok(TextField::Abstract),
            other => Err(format!("unknown field {other:?}")),
        }
    }
}

/// A mention anchored to a record field. Mention types are open strings here
/// because externally supplied mention files (drugs) use the same shape.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub pmid: u64,
    pub field: TextField,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity_type: String,
    pub concept_id: String,
}

/// Identity of an annotation for agreement and scoring: span, type, concept.
pub type MentionKey = (u64, TextField, usize, usize, String, String);

impl EntityMention {
    pub fn key(&self) -> MentionKey {
        (self.pmid, self.field, self.start, self.end, self.entity_type.clone(), self.concept_id.clone())
    }

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.pmid, self.field, self.start, self.end, self.surface, self.entity_type, self.concept_id
        )
    }
}

/// Recognizes mentions in a record's title and abstract.
pub fn annotate_record(record: &CitationRecord, lexicon: &Lexicon) -> Vec<EntityMention> {
    [(TextField::Title, &record.title), (TextField::Abstract, &record.abstract_text)]
        .into_iter()
        .flat_map(|(field, text)| {
            recognize(text, lexicon).into_iter().map(move |m| EntityMention {
                pmid: record.pmid,
                field,
                start: m.start,
                end: m.end,
                surface: m.surface,
                entity_type: m.entity_type.to_string(),
                concept_id: m.concept_id,
            })
        })
        .collect()
}

pub const MENTION_HEADER: &str = "pmid\tfield\tstart\tend\tsurface\ttype\tconcept_id";

pub fn write_mentions<W: Write>(mut w: W, mentions: &[EntityMention]) -> std::io::Result<()> {
    writeln!(w, "{MENTION_HEADER}")?;
    for m in mentions {
        writeln!(w, "{}", m.tsv_row())?;
    }
    Ok(())
}

/// Reads a mention TSV (header optional).
pub fn read_mentions<R: BufRead>(r: R) -> Result<Vec<EntityMention>, LexiconError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("pmid\t")) {
            continue;
        }
        let err = |reason: String| LexiconError::Format { line: i + 1, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        let [pmid, field, start, end, surface, ty, concept] = cols.as_slice() else {
            return Err(err(format!("expected 7 columns, got {}", cols.len())));
        };
        out.push(EntityMention {
            pmid: pmid.parse().map_err(|_| err(format!("bad pmid {pmid:?}")))?,
            field: field.parse().map_err(err)?,
            start: start.parse().map_err(|_| err(format!("bad start {start:?}")))?,
            end: end.parse().map_err(|_| err(format!("bad end {end:?}")))?,
            surface: surface.to_string(),
            entity_type: ty.to_string(),
            concept_id: concept.to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEX: &str = "#entries
beta\tstrain\tSTRAIN:Beta\t1
b.1.351\tstrain\tSTRAIN:Beta\t0
omicron\tstrain\tSTRAIN:Omicron\t0
omicron ba.4.5\tstrain\tSTRAIN:Omicron-BA.4.5\t0
mrna-1273\tvaccine\tVAX:mRNA-1273\t0
spikevax\tvaccine\tVAX:mRNA-1273\t0
sputnik v\tvaccine\tVAX:Sputnik-V\t0
moderna\tfunder\tFUND:Moderna\t0
#concepts
STRAIN:Beta\tstrain\tBeta
STRAIN:Omicron\tstrain\tOmicron
STRAIN:Omicron-BA.4.5\tstrain\tOmicron BA.4.5
VAX:mRNA-1273\tvaccine\tmRNA-1273
VAX:Sputnik-V\tvaccine\tSputnik V
FUND:Moderna\tfunder\tModerna
#links
VAX:mRNA-1273\tFUND:Moderna
";

    fn lex() -> Lexicon {
        Lexicon::parse(LEX.as_bytes()).unwrap()
    }

    #[test]
    fn gating() {
        let l = lex();
        let m = recognize("the Beta variant spread", &l);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].surface.as_str(), m[0].concept_id.as_str()), ("Beta", "STRAIN:Beta"));
        assert!(recognize("fit a beta distribution to the data", &l).is_empty());
        let far = "beta one two three four five six seven eight nine variant";
        assert!(recognize(far, &l).is_empty());
        let near = "beta one two three four five six seven variant";
        assert_eq!(recognize(near, &l).len(), 1);
    }

    #[test]
    fn longest_match() {
        let m = recognize("Omicron BA.4.5 now dominates", &lex());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].surface, "Omicron BA.4.5");
        assert_eq!(m[0].concept_id, "STRAIN:Omicron-BA.4.5");
        let m = recognize("Omicron BA.2 waves", &lex());
        assert_eq!(m[0].surface, "Omicron");
    }

    #[test]
    fn normalization_and_links() {
        let l = lex();
        assert_eq!(normalize("B.1.351", EntityType::Strain, &l), Some("STRAIN:Beta"));
        assert_eq!(normalize("mRNA-1273", EntityType::Vaccine, &l), Some("VAX:mRNA-1273"));
        assert_eq!(normalize("Spikevax", EntityType::Vaccine, &l), normalize("mrna-1273", EntityType::Vaccine, &l));
        assert_eq!(link_funder("VAX:mRNA-1273", &l), Ok(Some("FUND:Moderna")));
        assert_eq!(link_funder("VAX:Sputnik-V", &l), Ok(None));
        assert_eq!(link_funder("STRAIN:Beta", &l), Err(LinkError::NotAVaccine("STRAIN:Beta".into())));
        assert!(matches!(link_funder("VAX:none", &l), Err(LinkError::UnknownConcept(_))));
    }

    #[test]
    fn load_errors() {
        let dangling = "#entries\nfoo\tstrain\tSTRAIN:Foo\t0\n#concepts\n";
        assert!(matches!(Lexicon::parse(dangling.as_bytes()), Err(LexiconError::DanglingConcept { .. })));
        let dup = "#concepts\nS:A\tstrain\tA\n#entries\nA\tstrain\tS:A\t0\na\tstrain\tS:A\t1\n";
        assert!(matches!(Lexicon::parse(dup.as_bytes()), Err(LexiconError::DuplicateSurface { .. })));
        let link = "#concepts\nS:A\tstrain\tA\nF:B\tfunder\tB\n#links\nS:A\tF:B\n";
        assert!(matches!(Lexicon::parse(link.as_bytes()), Err(LexiconError::BadLink { .. })));
        let mismatch = "#concepts\nS:A\tstrain\tA\n#entries\nA\tvaccine\tS:A\t0\n";
        assert!(matches!(Lexicon::parse(mismatch.as_bytes()), Err(LexiconError::ConceptTypeMismatch { .. })));
        let flag = "#concepts\nS:A\tstrain\tA\n#entries\nA\tstrain\tS:A\tyes\n";
        assert!(matches!(Lexicon::parse(flag.as_bytes()), Err(LexiconError::Format { .. })));
    }

    #[test]
    fn record_offsets_match_source() {
        let mut r = CitationRecord::new(
            1,
            "Sputnik V and mRNA-1273 after B.1.351",
            "Moderna produced mRNA-1273.",
            chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        );
        r.journal = "J".into();
        let ms = annotate_record(&r, &lex());
        assert_eq!(ms.len(), 5);
        for m in &ms {
            let src = if m.field == TextField::Title { &r.title } else { &r.abstract_text };
            let slice: String = src.chars().skip(m.start).take(m.end - m.start).collect();
            assert_eq!(slice, m.surface);
        }
        let mut buf = Vec::new();
        write_mentions(&mut buf, &ms).unwrap();
        assert_eq!(read_mentions(&buf[..]).unwrap(), ms);
    }

    #[test]
    fn trie_longest_spans() {
        let mut t = PhraseTrie::default();
        t.insert(&token_terms("long covid"), ());
        t.insert(&token_terms("long covid syndrome"), ());
        t.insert(&token_terms("pasc"), ());
        let terms = token_terms("Long COVID syndrome and PASC and long covid");
        assert_eq!(t.longest_spans(&terms), vec![(0, 3), (4, 5), (6, 8)]);
        assert_eq!(t.count_longest(&terms), 3);
    }

    #[test]
    fn term_list_shapes() {
        let sectioned =
            "#entries\nLong COVID\tsynonym\tLC\t0\npost-COVID condition\tsynonym\tLC\t0\n#concepts\nLC\tx\ty\n";
        let a = TermList::parse(sectioned.as_bytes()).unwrap();
        assert_eq!(a.terms(), &["long covid".to_string(), "post-covid condition".to_string()]);
        let b = TermList::parse("# comment\nlong covid\n\nPost-COVID condition\n".as_bytes()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert!(b.contains_any("Patients with LONG COVID"));
        assert!(!b.contains_any("long-term covid"));
    }
}
