//! Evaluation: precision/recall/F1, exact-match agreement, deterministic
//! splits and collection coverage.
//!
//! Empty denominators follow one convention throughout: precision is 1.0 when
//! nothing was predicted, recall is 1.0 when nothing was expected. F1 is 0.0
//! only when precision and recall are both zero.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("split sizes {n_train}+{n_test} do not add up to {n_ids} ids")]
    SizeMismatch { n_train: usize, n_test: usize, n_ids: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { tp, fp, fn_, precision, recall, f1 }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "tp={} fp={} fn={} precision={:.6} recall={:.6} f1={:.6}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1
        )
    }
}

/// Set-intersection counting of `pred` against `gold`.
pub fn prf<T: Ord>(gold: &BTreeSet<T>, pred: &BTreeSet<T>) -> Prf {
    let tp = gold.intersection(pred).count();
    Prf::from_counts(tp, pred.len() - tp, gold.len() - tp)
}

/// Pools counts across groups (micro average).
pub fn micro_average<'a, I: IntoIterator<Item = &'a Prf>>(parts: I) -> Prf {
    let (tp, fp, fn_) = parts.into_iter().fold((0, 0, 0), |acc, p| (acc.0 + p.tp, acc.1 + p.fp, acc.2 + p.fn_));
    Prf::from_counts(tp, fp, fn_)
}

/// Unweighted mean of per-group precision, recall and F1 (macro average).
/// Counts are pooled so the result still reports totals.
pub fn macro_average(parts: &[Prf]) -> Prf {
    let pooled = micro_average(parts);
    if parts.is_empty() {
        return pooled;
    }
    let n = parts.len() as f64;
    Prf {
        precision: parts.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: parts.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: parts.iter().map(|p| p.f1).sum::<f64>() / n,
        ..pooled
    }
}

/// Exact-match agreement between two annotation sets, under three readings
/// of "out of the total number of entities".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub matches: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub n_union: usize,
    /// matches / |A ∪ B| (default).
    pub union_ratio: f64,
    /// matches / mean(|A|, |B|).
    pub per_annotator_ratio: f64,
    /// matches / |A|, treating A as the reference.
    pub gold_ratio: f64,
}

impl IaaReport {
    pub fn summary_line(&self) -> String {
        format!(
            "matches={} n_a={} n_b={} union={} iaa_union={:.6} iaa_per_annotator={:.6} iaa_gold={:.6}",
            self.matches, self.n_a, self.n_b, self.n_union, self.union_ratio, self.per_annotator_ratio, self.gold_ratio
        )
    }
}

fn ratio(num: usize, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num as f64 / den
    }
}

/// Items are whole annotations (span, type, concept), so set equality is the
/// exact-match criterion.
pub fn iaa_exact<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> IaaReport {
    let matches = a.intersection(b).count();
    let n_union = a.len() + b.len() - matches;
    IaaReport {
        matches,
        n_a: a.len(),
        n_b: b.len(),
        n_union,
        union_ratio: ratio(matches, n_union as f64),
        per_annotator_ratio: ratio(matches, (a.len() + b.len()) as f64 / 2.0),
        gold_ratio: ratio(matches, a.len() as f64),
    }
}

/// Deterministic shuffle-and-cut. Input order does not matter: ids are sorted
/// before shuffling.
pub fn split(ids: &[u64], n_train: usize, n_test: usize, seed: u64) -> Result<(Vec<u64>, Vec<u64>), EvalError> {
    if n_train + n_test != ids.len() {
        return Err(EvalError::SizeMismatch { n_train, n_test, n_ids: ids.len() });
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub size_a: usize,
    pub size_b: usize,
    pub size_both: usize,
    pub b_covered_by_a: f64,
    pub a_covered_by_b: f64,
}

impl CoverageReport {
    pub fn summary_line(&self) -> String {
        format!(
            "a={} b={} both={} b_covered_by_a={:.6} a_covered_by_b={:.6}",
            self.size_a, self.size_b, self.size_both, self.b_covered_by_a, self.a_covered_by_b
        )
    }
}

pub fn compare_collections<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> CoverageReport {
    let both = a.intersection(b).count();
    CoverageReport {
        size_a: a.len(),
        size_b: b.len(),
        size_both: both,
        b_covered_by_a: ratio(both, b.len() as f64),
        a_covered_by_b: ratio(both, a.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[u32]) -> BTreeSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn hand_computed_prf() {
        let p = Prf::from_counts(3, 1, 2);
        assert!((p.precision - 0.75).abs() < 1e-12);
        assert!((p.recall - 0.6).abs() < 1e-12);
        assert!((p.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        let gold = set(&[1, 2, 3, 4, 5]);
        let pred = set(&[1, 2, 3, 9]);
        assert_eq!(prf(&gold, &pred), p);
    }

    #[test]
    fn prf_conventions() {
        let p = prf(&set(&[1, 2]), &set(&[1, 2]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf(&set(&[]), &set(&[]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf(&set(&[1]), &set(&[2]));
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn averages() {
        let a = Prf::from_counts(1, 0, 0);
        let b = Prf::from_counts(0, 1, 1);
        let micro = micro_average([&a, &b]);
        assert_eq!((micro.tp, micro.fp, micro.fn_), (1, 1, 1));
        let mac = macro_average(&[a, b]);
        assert_eq!(mac.f1, 0.5);
    }

    #[test]
    fn iaa_union_and_per_annotator() {
        let a: BTreeSet<u32> = (0..10).collect();
        let b: BTreeSet<u32> = (0..8).chain([100, 101]).collect();
        let r = iaa_exact(&a, &b);
        assert_eq!(r.matches, 8);
        assert!((r.union_ratio - 8.0 / 12.0).abs() < 1e-12);
        assert!((r.per_annotator_ratio - 0.8).abs() < 1e-12);
        assert_eq!(iaa_exact(&a, &a).union_ratio, 1.0);
        assert_eq!(iaa_exact(&set(&[1]), &set(&[2])).union_ratio, 0.0);
    }

    #[test]
    fn split_sizes_and_errors() {
        let ids: Vec<u64> = (1..=500).collect();
        let (train, test) = split(&ids, 400, 100, 7).unwrap();
        assert_eq!((train.len(), test.len()), (400, 100));
        assert_eq!(split(&ids, 400, 100, 7).unwrap(), (train.clone(), test.clone()));
        assert_ne!(split(&ids, 400, 100, 1).unwrap(), split(&ids, 400, 100, 2).unwrap());
        assert!(matches!(split(&ids, 400, 99, 7), Err(EvalError::SizeMismatch { .. })));
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(split(&rev, 400, 100, 7).unwrap().0, train);
    }

    #[test]
    fn coverage() {
        let a: BTreeSet<u32> = (0..90).collect();
        let b: BTreeSet<u32> = (70..92).collect();
        let r = compare_collections(&a, &b);
        assert_eq!((r.size_a, r.size_b, r.size_both), (90, 22, 20));
        assert!((r.b_covered_by_a - 20.0 / 22.0).abs() < 1e-12);
        let same = compare_collections(&a, &a);
        assert_eq!((same.b_covered_by_a, same.a_covered_by_b), (1.0, 1.0));
        let disjoint = compare_collections(&set(&[1]), &set(&[2]));
        assert_eq!((disjoint.b_covered_by_a, disjoint.a_covered_by_b), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn prf_symmetry_and_bounds(gold in proptest::collection::btree_set(0u32..40, 0..20),
                                   pred in proptest::collection::btree_set(0u32..40, 0..20)) {
            let a = prf(&gold, &pred);
            let b = prf(&pred, &gold);
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert!((a.f1 - b.f1).abs() < 1e-15);
            for v in [a.precision, a.recall, a.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let ia = iaa_exact(&gold, &pred);
            let ib = iaa_exact(&pred, &gold);
            prop_assert_eq!(ia.union_ratio, ib.union_ratio);
            prop_assert_eq!(ia.per_annotator_ratio, ib.per_annotator_ratio);
        }

        #[test]
        fn split_partitions(n in 1usize..200, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
            let n_train = (n as f64 * frac) as usize;
            let (train, test) = split(&ids, n_train, n - n_train, seed).unwrap();
            let tr: BTreeSet<u64> = train.iter().copied().collect();
            let te: BTreeSet<u64> = test.iter().copied().collect();
            prop_assert!(tr.is_disjoint(&te));
            let all: BTreeSet<u64> = tr.union(&te).copied().collect();
            prop_assert_eq!(all, ids.iter().copied().collect::<BTreeSet<_>>());
        }
    }
}
