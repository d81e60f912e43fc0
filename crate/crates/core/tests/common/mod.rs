#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use hub_core::corpus::{parse_record, CitationRecord};
use hub_core::demo::fixture_dir;
use hub_core::entities::{read_mentions, EntityMention, Lexicon};
use hub_core::linear::LogisticHead;
use hub_core::text::FeatureVector;
use hub_core::triage::read_labeled;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn text(name: &str) -> String {
    fs::read_to_string(fixture_dir().join(name)).unwrap()
}

pub fn records(name: &str) -> Vec<CitationRecord> {
    text(name).lines().map(|l| parse_record(l).unwrap()).collect()
}

pub fn labeled(name: &str) -> Vec<(CitationRecord, bool)> {
    read_labeled(text(name).as_bytes()).unwrap()
}

pub fn lexicon() -> Lexicon {
    Lexicon::load(fixture_dir().join("lexicon.tsv")).unwrap()
}

pub fn mentions(name: &str) -> Vec<EntityMention> {
    read_mentions(text(name).as_bytes()).unwrap()
}

/// `pmid<TAB>accepted|rejected` files.
pub fn verdicts(name: &str) -> BTreeMap<u64, bool> {
    text(name)
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .filter_map(|(p, v)| Some((p.parse().ok()?, v == "accepted")))
        .collect()
}

pub fn id_list(name: &str) -> BTreeSet<u64> {
    text(name).lines().filter(|l| !l.starts_with('#')).filter_map(|l| l.trim().parse().ok()).collect()
}

pub fn topic_labels() -> BTreeMap<u64, BTreeSet<String>> {
    hub_core::topics::read_label_file(text("topic_labels.tsv").as_bytes()).unwrap()
}

/// Central differences against the analytic gradient at a random point.
pub fn check_gradient(xs: &[FeatureVector], ys: &[bool], dim: usize, l2: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head =
        LogisticHead { weights: (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect(), bias: rng.gen_range(-0.5..0.5) };
    let (gw, gb) = head.gradient(xs, ys, l2);
    let h = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    for _ in 0..5 {
        let i = rng.gen_range(0..dim);
        let (mut up, mut down) = (head.clone(), head.clone());
        up.weights[i] += h;
        down.weights[i] -= h;
        let numeric = (up.loss(xs, ys, l2) - down.loss(xs, ys, l2)) / (2.0 * h);
        assert!(rel(gw[i], numeric) < 1e-4, "w[{i}]: {} vs {numeric}", gw[i]);
    }
    let (mut up, mut down) = (head.clone(), head.clone());
    up.bias += h;
    down.bias -= h;
    let numeric = (up.loss(xs, ys, l2) - down.loss(xs, ys, l2)) / (2.0 * h);
    assert!(rel(gb, numeric) < 1e-4, "bias: {gb} vs {numeric}");
}
