mod common;

use std::collections::BTreeSet;

use common::*;
use hub_core::eval::{compare_collections, iaa_exact, macro_average, micro_average, prf, split};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn prf_worked_example() {
    let gold: BTreeSet<u32> = [1, 2, 3, 4, 5].into();
    let pred: BTreeSet<u32> = [1, 2, 3, 9].into();
    let p = prf(&gold, &pred);
    assert_eq!((p.tp, p.fp, p.fn_), (3, 1, 2));
    assert!((p.precision - 0.75).abs() < 1e-9);
    assert!((p.recall - 0.6).abs() < 1e-9);
    assert!((p.f1 - 0.666667).abs() < 1e-6);
    assert!((p.f1 - 2.0 / 3.0).abs() < 1e-9);
}

#[test]
fn prf_matches_a_brute_force_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(2023);
    for _ in 0..200 {
        let universe = rng.gen_range(1..60u32);
        let gold: Vec<u32> = (0..universe).filter(|_| rng.gen_bool(0.4)).collect();
        let pred: Vec<u32> = (0..universe).filter(|_| rng.gen_bool(0.4)).collect();
        let tp = pred.iter().filter(|x| gold.contains(x)).count();
        let fp = pred.len() - tp;
        let fn_ = gold.iter().filter(|x| !pred.contains(x)).count();
        let p = prf(&gold.iter().copied().collect(), &pred.iter().copied().collect());
        assert_eq!((p.tp, p.fp, p.fn_), (tp, fp, fn_));
        if tp > 0 {
            let (pr, rc) = (tp as f64 / pred.len() as f64, tp as f64 / gold.len() as f64);
            assert_eq!(p.precision, pr);
            assert_eq!(p.recall, rc);
            assert!((p.f1 - 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64).abs() < 1e-12);
        } else if gold.is_empty() && pred.is_empty() {
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        } else {
            assert_eq!(p.f1, 0.0);
        }
    }
}

#[test]
fn averages() {
    let a = prf(&BTreeSet::from([1, 2]), &BTreeSet::from([1, 2]));
    let b = prf(&BTreeSet::from([1, 2]), &BTreeSet::from([3]));
    let micro = micro_average([&a, &b]);
    assert_eq!((micro.tp, micro.fp, micro.fn_), (2, 1, 2));
    let mac = macro_average(&[a, b]);
    assert!((mac.f1 - 0.5).abs() < 1e-12);
}

#[test]
fn iaa_fixture() {
    let a: BTreeSet<_> = mentions("iaa_annotator_a.tsv").iter().map(|m| m.key()).collect();
    let b: BTreeSet<_> = mentions("iaa_annotator_b.tsv").iter().map(|m| m.key()).collect();
    assert_eq!((a.len(), b.len()), (10, 10));
    let r = iaa_exact(&a, &b);
    assert_eq!((r.matches, r.n_union), (8, 12));
    assert!((r.union_ratio - 8.0 / 12.0).abs() < 1e-12);
    assert!((r.per_annotator_ratio - 0.8).abs() < 1e-12);
    assert!((r.gold_ratio - 0.8).abs() < 1e-12);
}

#[test]
fn split_is_disjoint_exhaustive_and_seeded() {
    let ids: Vec<u64> = (1..=500).collect();
    let (train, test) = split(&ids, 400, 100, 7).unwrap();
    assert_eq!((train.len(), test.len()), (400, 100));
    let all: BTreeSet<u64> = train.iter().chain(&test).copied().collect();
    assert_eq!(all, ids.iter().copied().collect());
    assert_eq!(split(&ids, 400, 100, 7).unwrap(), (train.clone(), test));
    let mut reversed = ids.clone();
    reversed.reverse();
    assert_eq!(split(&reversed, 400, 100, 7).unwrap().0, train);
    assert_ne!(split(&ids, 400, 100, 1).unwrap(), split(&ids, 400, 100, 2).unwrap());
    assert!(split(&ids, 400, 99, 7).is_err());
}

#[test]
fn coverage() {
    let a: BTreeSet<u32> = (1..=90).collect();
    let b: BTreeSet<u32> = (71..=92).collect();
    let r = compare_collections(&a, &b);
    assert_eq!((r.size_a, r.size_b, r.size_both), (90, 22, 20));
    assert!((r.b_covered_by_a - 20.0 / 22.0).abs() < 1e-12);
    assert!((r.b_covered_by_a - 0.909).abs() < 1e-3);

    // Full-size analogue: 2,035 of 2,261 is about 90%.
    let a: BTreeSet<u32> = (0..9084).collect();
    let b: BTreeSet<u32> = (9084 - 2035..9084 - 2035 + 2261).collect();
    let r = compare_collections(&a, &b);
    assert_eq!((r.size_a, r.size_b, r.size_both), (9084, 2261, 2035));
    assert!((r.b_covered_by_a - 0.90).abs() < 0.005);
}

proptest! {
    #[test]
    fn iaa_is_symmetric(a in prop::collection::btree_set(0u16..50, 0..30), b in prop::collection::btree_set(0u16..50, 0..30)) {
        let ab = iaa_exact(&a, &b);
        let ba = iaa_exact(&b, &a);
        prop_assert_eq!(ab.matches, ba.matches);
        prop_assert_eq!(ab.union_ratio, ba.union_ratio);
        prop_assert_eq!(ab.per_annotator_ratio, ba.per_annotator_ratio);
        prop_assert!(ab.union_ratio <= ab.per_annotator_ratio + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.union_ratio));
    }

    #[test]
    fn split_partitions_any_id_set(ids in prop::collection::btree_set(any::<u64>(), 0..80), frac in 0.0f64..1.0, seed in any::<u64>()) {
        let ids: Vec<u64> = ids.into_iter().collect();
        let n_train = (ids.len() as f64 * frac) as usize;
        let (train, test) = split(&ids, n_train, ids.len() - n_train, seed).unwrap();
        let mut all: Vec<u64> = train.into_iter().chain(test).collect();
        all.sort_unstable();
        prop_assert_eq!(all, ids);
    }
}
