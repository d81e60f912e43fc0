//! Text serialization for trained linear models.
//!
//! ```text
//! #hub-linear-model 1
//! #key=value            (any number of header lines)
//! #n_docs=<N>
//! #bias=<b1>\t<b2>...
//! term<TAB>df<TAB>w1<TAB>w2...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reading a model
//! back reproduces every weight bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::linear::LogisticHead;
use crate::text::{default_stop_words, Featurizer, NGrams, TextError, Vocabulary, Weighting};

const MAGIC: &str = "#hub-linear-model 1";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Text(#[from] TextError),
}

fn bad(msg: impl Into<String>) -> ModelIoError {
    ModelIoError::Format(msg.into())
}

/// A featurizer plus K heads and free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArtifact {
    pub meta: BTreeMap<String, String>,
    pub featurizer: Featurizer,
    pub heads: Vec<LogisticHead>,
}

impl LinearArtifact {
    pub fn meta_value(&self, key: &str) -> Result<&str, ModelIoError> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing header {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ModelIoError> {
        let raw = self.meta_value(key)?;
        raw.parse().map_err(|_| bad(format!("bad value for {key}: {raw:?}")))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ModelIoError> {
        writeln!(w, "{MAGIC}")?;
        let f = &self.featurizer;
        let ngrams = match f.ngrams {
            NGrams::Unigram => "unigram",
            NGrams::Bigram => "bigram",
        };
        let weighting = match f.weighting {
            Weighting::Tf => "tf",
            Weighting::TfIdf => "tfidf",
        };
        writeln!(w, "#ngrams={ngrams}")?;
        writeln!(w, "#weighting={weighting}")?;
        writeln!(w, "#stop_words={}", u8::from(f.stop_words.is_some()))?;
        writeln!(w, "#vocab_fingerprint={}", f.vocab.fingerprint())?;
        for (k, v) in &self.meta {
            if v.contains('\n') {
                return Err(bad(format!("header {k} contains a newline")));
            }
            writeln!(w, "#{k}={v}")?;
        }
        writeln!(w, "#n_docs={}", f.vocab.n_docs())?;
        let biases: Vec<String> = self.heads.iter().map(|h| format!("{:?}", h.bias)).collect();
        writeln!(w, "#bias={}", biases.join("\t"))?;
        for (term, stats) in f.vocab.terms() {
            write!(w, "{term}\t{}", stats.df)?;
            for h in &self.heads {
                write!(w, "\t{:?}", h.weights[stats.index])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, ModelIoError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| bad("empty file"))??;
        if first.trim_end() != MAGIC {
            return Err(bad(format!("unexpected first line {first:?}")));
        }
        let mut meta = BTreeMap::new();
        let mut n_docs = None;
        let mut biases: Option<Vec<f64>> = None;
        let mut vocab_tsv = String::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let line = line?;
            if let Some(header) = line.strip_prefix('#') {
                let (k, v) = header.split_once('=').ok_or_else(|| bad(format!("bad header {line:?}")))?;
                match k {
                    "n_docs" => n_docs = Some(v.to_string()),
                    "bias" => {
                        let parsed = if v.is_empty() {
                            Vec::new()
                        } else {
                            v.split('\t').map(parse_f64).collect::<Result<Vec<_>, _>>()?
                        };
                        columns = vec![Vec::new(); parsed.len()];
                        biases = Some(parsed);
                    }
                    _ => {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let biases = biases.as_ref().ok_or_else(|| bad("weights before #bias header"))?;
            let mut parts = line.split('\t');
            let term = parts.next().ok_or_else(|| bad("empty row"))?;
            let df = parts.next().ok_or_else(|| bad(format!("row {term:?} lacks df")))?;
            vocab_tsv.push_str(&format!("{term}\t{df}\n"));
            let weights: Vec<f64> = parts.map(parse_f64).collect::<Result<_, _>>()?;
            if weights.len() != biases.len() {
                return Err(bad(format!("row {term:?} has {} weights, expected {}", weights.len(), biases.len())));
            }
            for (col, w) in columns.iter_mut().zip(weights) {
                col.push(w);
            }
        }
        let n_docs = n_docs.ok_or_else(|| bad("missing #n_docs"))?;
        let biases = biases.ok_or_else(|| bad("missing #bias"))?;
        let vocab = Vocabulary::read_tsv(format!("#n_docs={n_docs}\n{vocab_tsv}").as_bytes())?;
        let ngrams = match meta.remove("ngrams").as_deref() {
            Some("unigram") | None => NGrams::Unigram,
            Some("bigram") => NGrams::Bigram,
            Some(other) => return Err(bad(format!("unknown ngrams {other:?}"))),
        };
        let weighting = match meta.remove("weighting").as_deref() {
            Some("tfidf") | None => Weighting::TfIdf,
            Some("tf") => Weighting::Tf,
            Some(other) => return Err(bad(format!("unknown weighting {other:?}"))),
        };
        let stop_words: Option<BTreeSet<String>> =
            (meta.remove("stop_words").as_deref() == Some("1")).then(default_stop_words);
        if let Some(expected) = meta.remove("vocab_fingerprint") {
            if expected != vocab.fingerprint() {
                return Err(bad("vocabulary fingerprint mismatch"));
            }
        }
        let heads = columns.into_iter().zip(biases).map(|(weights, bias)| LogisticHead { weights, bias }).collect();
        Ok(LinearArtifact { meta, featurizer: Featurizer { vocab, ngrams, weighting, stop_words }, heads })
    }
}

fn parse_f64(s: &str) -> Result<f64, ModelIoError> {
    let v: f64 = s.trim().parse().map_err(|_| bad(format!("bad number {s:?}")))?;
    if !v.is_finite() {
        return Err(bad(format!("non-finite number {s:?}")));
    }
    Ok(v)
}
