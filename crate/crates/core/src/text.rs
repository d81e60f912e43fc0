//! Tokenization, vocabulary and sparse term-weight vectors.
//!
//! Every component that looks at article text goes through [`tokenize`], so
//! entity offsets, classifier features and index postings all agree on what a
//! token is. Tokens are maximal runs of letters and digits, with `-` and `.`
//! allowed between two alphanumeric characters. That keeps identifiers such as
//! `covid-19`, `b.1.351` and `mrna-1273` whole.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_df must be at least 1")]
    BadMinDf,
    #[error("vocabulary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One token: lowercased surface plus its `[start, end)` character span in the
/// source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

pub type TokenStream = Vec<Token>;

fn is_connector(c: char) -> bool {
    c == '-' || c == '.'
}

/// Splits `text` into lowercased tokens with character offsets.
pub fn tokenize(text: &str) -> TokenStream {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        loop {
            if end < chars.len() && chars[end].is_alphanumeric() {
                end += 1;
            } else if end + 1 < chars.len() && is_connector(chars[end]) && chars[end + 1].is_alphanumeric() {
                end += 2;
            } else {
                break;
            }
        }
        let surface: String = chars[start..end].iter().flat_map(|c| c.to_lowercase()).collect();
        tokens.push(Token { surface, start, end });
        i = end;
    }
    tokens
}

/// Lowercased token surfaces only.
pub fn token_terms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

/// Which n-grams a classifier extracts from text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NGrams {
    #[default]
    Unigram,
    Bigram,
}

impl NGrams {
    pub fn terms(self, text: &str, stop_words: Option<&BTreeSet<String>>) -> Vec<String> {
        let mut unigrams = token_terms(text);
        if let Some(stop) = stop_words {
            unigrams.retain(|t| !stop.contains(t));
        }
        match self {
            NGrams::Unigram => unigrams,
            NGrams::Bigram => unigrams.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect(),
        }
    }
}

/// A small English stop list for classifiers that opt into stop-listing.
pub fn default_stop_words() -> BTreeSet<String> {
    [
        "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "of", "on", "or", "that",
        "the", "this", "to", "was", "were", "with", "we", "our", "these",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub index: usize,
    pub df: u64,
}

/// Term dictionary with document frequencies. Indices are assigned in
/// lexicographic term order and are always `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: BTreeMap<String, TermStats>,
    n_docs: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from pre-extracted term lists (one per document).
    pub fn from_term_lists<I, D>(docs: I, min_df: u64) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = String>,
    {
        if min_df == 0 {
            return Err(TextError::BadMinDf);
        }
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        let mut n_docs = 0u64;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<String> = doc.into_iter().collect();
            for term in unique {
                *df.entry(term).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(TextError::EmptyCorpus);
        }
        Ok(Self::from_df(df.into_iter().filter(|(_, d)| *d >= min_df), n_docs))
    }

    /// Builds a unigram vocabulary over raw texts.
    pub fn from_texts<'a, I>(texts: I, min_df: u64) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        Self::from_term_lists(texts.into_iter().map(token_terms), min_df)
    }

    fn from_df<I: IntoIterator<Item = (String, u64)>>(entries: I, n_docs: u64) -> Self {
        let terms =
            entries.into_iter().enumerate().map(|(index, (term, df))| (term, TermStats { index, df })).collect();
        Vocabulary { terms, n_docs }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn get(&self, term: &str) -> Option<TermStats> {
        self.terms.get(term).copied()
    }

    /// Terms in index order.
    pub fn terms(&self) -> impl Iterator<Item = (&str, TermStats)> {
        self.terms.iter().map(|(t, s)| (t.as_str(), *s))
    }

    pub fn idf(&self, df: u64) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln()
    }

    /// SHA-256 over the serialized vocabulary, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }

    /// Writes `#n_docs=<N>` followed by `term<TAB>df` lines.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#n_docs={}", self.n_docs)?;
        for (term, stats) in &self.terms {
            writeln!(w, "{}\t{}", term, stats.df)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, TextError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| TextError::Format("missing header".into()))??;
        let n_docs = header
            .strip_prefix("#n_docs=")
            .and_then(|n| n.trim().parse::<u64>().ok())
            .ok_or_else(|| TextError::Format(format!("bad header {header:?}")))?;
        let mut df = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (term, count) = line
                .split_once('\t')
                .ok_or_else(|| TextError::Format(format!("line {}: expected term<TAB>df", i + 2)))?;
            let count: u64 =
                count.trim().parse().map_err(|_| TextError::Format(format!("line {}: bad df {count:?}", i + 2)))?;
            if count > n_docs {
                return Err(TextError::Format(format!("line {}: df exceeds n_docs", i + 2)));
            }
            df.insert(term.to_string(), count);
        }
        Ok(Self::from_df(df, n_docs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Tf,
    #[default]
    TfIdf,
}

/// Sparse vector, sorted by index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn get(&self, index: usize) -> f64 {
        self.entries.binary_search_by_key(&index, |(i, _)| *i).map(|pos| self.entries[pos].1).unwrap_or(0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w.abs()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|(i, w)| dense[*i] * w).sum()
    }
}

/// Weights a bag of terms against `vocab`. Out-of-vocabulary terms are dropped.
pub fn featurize_terms<I, S>(terms: I, vocab: &Vocabulary, scheme: Weighting) -> FeatureVector
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for term in terms {
        if let Some(stats) = vocab.get(term.as_ref()) {
            counts.entry(stats.index).or_insert((0, stats.df)).0 += 1;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(index, (tf, df))| {
            let tf = tf as f64;
            let weight = match scheme {
                Weighting::Tf => tf,
                Weighting::TfIdf => tf * vocab.idf(df),
            };
            (index, weight)
        })
        .collect();
    FeatureVector { entries }
}

/// Unigram featurization of raw text.
pub fn featurize(text: &str, vocab: &Vocabulary, scheme: Weighting) -> FeatureVector {
    featurize_terms(token_terms(text), vocab, scheme)
}

/// Vocabulary plus the extraction settings a classifier was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub ngrams: NGrams,
    pub weighting: Weighting,
    pub stop_words: Option<BTreeSet<String>>,
}

impl Featurizer {
    pub fn fit<'a, I>(
        texts: I,
        ngrams: NGrams,
        weighting: Weighting,
        min_df: u64,
        stop_words: Option<BTreeSet<String>>,
    ) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let vocab =
            Vocabulary::from_term_lists(texts.into_iter().map(|t| ngrams.terms(t, stop_words.as_ref())), min_df)?;
        Ok(Featurizer { vocab, ngrams, weighting, stop_words })
    }

    pub fn transform(&self, text: &str) -> FeatureVector {
        featurize_terms(self.ngrams.terms(text, self.stop_words.as_ref()), &self.vocab, self.weighting)
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }
}

/// Hex SHA-256 of arbitrary string parts, separated by unit separators.
pub fn content_hash<'a, I: IntoIterator<Item = &'a str>>(parts: I) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(text: &str) -> Vec<String> {
        token_terms(text)
    }

    #[test]
    fn keeps_internal_connectors() {
        assert_eq!(surfaces("COVID-19 vaccine"), ["covid-19", "vaccine"]);
        assert_eq!(surfaces("B.1.351 (Beta)"), ["b.1.351", "beta"]);
        assert_eq!(surfaces("the mRNA-1273 dose."), ["the", "mrna-1273", "dose"]);
        assert!(surfaces("").is_empty());
    }

    #[test]
    fn strips_edge_connectors() {
        assert_eq!(surfaces("-abc- .x. a--b"), ["abc", "x", "a", "b"]);
        assert_eq!(surfaces("after COVID-19."), ["after", "covid-19"]);
    }

    #[test]
    fn offsets_are_character_based() {
        let toks = tokenize("Évolution of B.1.351");
        assert_eq!(toks[0].surface, "évolution");
        assert_eq!((toks[0].start, toks[0].end), (0, 9));
        assert_eq!((toks[2].start, toks[2].end), (13, 20));
    }

    #[test]
    fn vocabulary_min_df() {
        let v = Vocabulary::from_texts(["a b", "b c"], 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.get("b"), Some(TermStats { index: 0, df: 2 }));

        let v = Vocabulary::from_texts(["a b", "b c"], 1).unwrap();
        let order: Vec<_> = v.terms().map(|(t, s)| (t.to_string(), s.index)).collect();
        assert_eq!(order, [("a".into(), 0), ("b".into(), 1), ("c".into(), 2)]);
    }

    #[test]
    fn vocabulary_errors() {
        assert!(matches!(Vocabulary::from_texts(Vec::<&str>::new(), 1), Err(TextError::EmptyCorpus)));
        assert!(matches!(Vocabulary::from_texts(["a"], 0), Err(TextError::BadMinDf)));
    }

    #[test]
    fn tf_and_tfidf() {
        let v = Vocabulary::from_texts(["a b", "b c"], 2).unwrap();
        let tf = featurize("b b", &v, Weighting::Tf);
        assert_eq!(tf.entries, vec![(0, 2.0)]);
        let tfidf = featurize("b b", &v, Weighting::TfIdf);
        assert_eq!(tfidf.entries, vec![(0, 0.0)]);
    }

    #[test]
    fn vocabulary_tsv_round_trip() {
        let v = Vocabulary::from_texts(["covid-19 vaccine", "b.1.351 vaccine", "x"], 1).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("#n_docs=3\n"));
        let back = Vocabulary::read_tsv(&buf[..]).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }

    #[test]
    fn bigrams() {
        assert_eq!(NGrams::Bigram.terms("long covid clinic", None), ["long covid", "covid clinic"]);
        let stop = default_stop_words();
        assert_eq!(NGrams::Unigram.terms("the long and winding", Some(&stop)), ["long", "winding"]);
    }

    proptest! {
        #[test]
        fn token_stream_invariants(text in "\\PC{0,80}") {
            let toks = tokenize(&text);
            let chars: Vec<char> = text.chars().collect();
            let mut last_end = 0;
            for t in &toks {
                prop_assert!(t.start >= last_end);
                prop_assert!(t.start < t.end);
                let slice: String = chars[t.start..t.end].iter().flat_map(|c| c.to_lowercase()).collect();
                prop_assert_eq!(&slice, &t.surface);
                last_end = t.end;
            }
            prop_assert_eq!(tokenize(&text), toks);
        }

        #[test]
        fn featurize_is_order_invariant(words in proptest::collection::vec("[a-d]{1,2}", 0..20)) {
            let vocab = Vocabulary::from_texts(["a b c d", "aa bb", "a c"], 1).unwrap();
            let forward = words.join(" ");
            let mut rev = words.clone();
            rev.reverse();
            let backward = rev.join(" ");
            prop_assert_eq!(
                featurize(&forward, &vocab, Weighting::TfIdf),
                featurize(&backward, &vocab, Weighting::TfIdf)
            );
            let tf = featurize(&forward, &vocab, Weighting::Tf);
            prop_assert!(tf.l1_norm() <= tokenize(&forward).len() as f64);
        }
    }
}
