mod common;

use std::collections::{BTreeSet, HashMap};

use common::*;
use hub_core::text::{featurize, token_terms, tokenize, Vocabulary, Weighting};
use proptest::prelude::*;

fn corpus_texts(n: usize) -> Vec<String> {
    records("corpus_1k.jsonl").into_iter().take(n).map(|r| r.text()).collect()
}

#[test]
fn document_frequencies_match_a_recount() {
    let texts = corpus_texts(100);
    let vocab = Vocabulary::from_texts(texts.iter().map(String::as_str), 1).unwrap();
    let bags: Vec<BTreeSet<String>> =
        texts.iter().map(|t| tokenize(t).into_iter().map(|tok| tok.surface).collect()).collect();
    let mut df: HashMap<&str, u64> = HashMap::new();
    for bag in &bags {
        for t in bag {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }
    assert_eq!(vocab.n_docs(), 100);
    assert_eq!(vocab.len(), df.len());
    for (term, stats) in vocab.terms() {
        assert_eq!(stats.df, df[term], "{term}");
    }
    let indices: BTreeSet<usize> = vocab.terms().map(|(_, s)| s.index).collect();
    assert_eq!(indices, (0..vocab.len()).collect());

    let pruned = Vocabulary::from_texts(texts.iter().map(String::as_str), 3).unwrap();
    assert_eq!(pruned.len(), df.values().filter(|d| **d >= 3).count());
}

#[test]
fn tfidf_matches_an_independent_computation() {
    let texts = corpus_texts(100);
    let vocab = Vocabulary::from_texts(texts.iter().map(String::as_str), 2).unwrap();
    let n = vocab.n_docs() as f64;
    for probe in records("corpus_1k.jsonl").iter().skip(100).take(50) {
        let text = probe.text();
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in token_terms(&text) {
            *tf.entry(t).or_default() += 1.0;
        }
        let v = featurize(&text, &vocab, Weighting::TfIdf);
        let tfv = featurize(&text, &vocab, Weighting::Tf);
        let mut expected = 0;
        for (term, count) in &tf {
            let Some(s) = vocab.get(term) else { continue };
            expected += 1;
            let w = count * ((1.0 + n) / (1.0 + s.df as f64)).ln();
            assert!((v.get(s.index) - w).abs() <= 1e-12, "{term}");
            assert_eq!(tfv.get(s.index), *count);
        }
        assert_eq!(v.entries.len(), expected);
    }
}

#[test]
fn repeated_term_in_every_document_weighs_zero() {
    let vocab = Vocabulary::from_texts(["covid vaccine", "covid"], 1).unwrap();
    let v = featurize("covid covid", &vocab, Weighting::TfIdf);
    assert_eq!(v.get(vocab.get("covid").unwrap().index), 2.0 * (3.0f64 / 3.0).ln());
    assert_eq!(featurize("covid covid", &vocab, Weighting::Tf).entries, vec![(vocab.get("covid").unwrap().index, 2.0)]);
}

proptest! {
    #[test]
    fn tf_mass_is_bounded_by_token_count(doc in "[a-z .-]{0,80}", text in "[a-zA-Z0-9 .,;-]{0,120}") {
        let vocab = Vocabulary::from_texts([doc.as_str(), "alpha beta gamma"], 1).unwrap();
        let v = featurize(&text, &vocab, Weighting::Tf);
        prop_assert!(v.l1_norm() <= tokenize(&text).len() as f64);
        prop_assert!(v.entries.iter().all(|(i, w)| *i < vocab.len() && w.is_finite()));
    }

    #[test]
    fn tokenization_is_deterministic_and_ordered(text in "\\PC{0,100}") {
        let a = tokenize(&text);
        prop_assert_eq!(&a, &tokenize(&text));
        for w in a.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        let chars: Vec<char> = text.chars().collect();
        for t in &a {
            prop_assert!(t.start < t.end);
            let slice: String = chars[t.start..t.end].iter().collect();
            prop_assert_eq!(&slice.to_lowercase(), &t.surface);
        }
    }
}
