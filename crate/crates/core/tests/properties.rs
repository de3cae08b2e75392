mod common;

use std::collections::BTreeSet;

use common::record;
use gdvae::corpus::{apply_frequency_threshold, split, Corpus, SplitRatios};
use gdvae::eval::{classification_metrics, topm_metrics, Cooccurrence};
use gdvae::model::{kl_logistic_normal, kl_standard_normal, laplace_prior};
use gdvae::neural::tape::{row_log_softmax, row_softmax};
use gdvae::neural::DenseMatrix;
use proptest::prelude::*;

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    let adm = (
        prop::collection::btree_set(0usize..6, 1..4),
        prop::collection::btree_set(0usize..5, 0..3),
        0usize..3,
    );
    prop::collection::vec(adm, 5..30).prop_map(|rows| {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (d, p, l))| {
                let d: Vec<String> = d.iter().map(|x| format!("d{x}")).collect();
                let p: Vec<String> = p.iter().map(|x| format!("p{x}")).collect();
                let d: Vec<&str> = d.iter().map(String::as_str).collect();
                let p: Vec<&str> = p.iter().map(String::as_str).collect();
                record(&format!("A{i:03}"), &d, &p, &format!("t{l}"))
            })
            .collect();
        Corpus::new(records).unwrap()
    })
}

/// Brute-force top-M metrics from explicit membership loops.
fn topm_oracle(lists: &[Vec<usize>], truths: &[Vec<usize>]) -> (f64, f64, f64) {
    let mut sums = (0.0, 0.0, 0.0);
    let mut n = 0;
    for (w, y) in lists.iter().zip(truths) {
        if y.is_empty() {
            continue;
        }
        let hits = w.iter().filter(|x| y.contains(x)).count() as f64;
        let p = hits / w.len() as f64;
        let r = hits / y.len() as f64;
        sums.0 += p;
        sums.1 += r;
        sums.2 += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        n += 1;
    }
    let n = n.max(1) as f64;
    (sums.0 / n, sums.1 / n, sums.2 / n)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn threshold_is_idempotent(corpus in corpus_strategy(), k in 1usize..4) {
        if let Ok(once) = apply_frequency_threshold(&corpus, k) {
            let twice = apply_frequency_threshold(&once, k).unwrap();
            prop_assert_eq!(once.digest(), twice.digest());
        }
    }

    #[test]
    fn split_partitions_positions(corpus in corpus_strategy(), seed in any::<u64>()) {
        let s = split(&corpus, SplitRatios::default(), seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..corpus.len()).collect::<Vec<_>>());
        prop_assert_eq!(s.clone(), split(&corpus, SplitRatios::default(), seed).unwrap());
    }

    #[test]
    fn topm_matches_set_arithmetic(
        cases in prop::collection::vec(
            (prop::collection::btree_set(0usize..8, 1..5), prop::collection::btree_set(0usize..8, 0..6)),
            1..10,
        )
    ) {
        let lists: Vec<Vec<usize>> = cases.iter().map(|c| c.0.iter().copied().collect()).collect();
        let truths: Vec<Vec<usize>> = cases.iter().map(|c| c.1.iter().copied().collect()).collect();
        let sets: Vec<BTreeSet<usize>> = cases.iter().map(|c| c.1.clone()).collect();
        let r = topm_metrics(&lists, &sets).unwrap();
        let (p, rc, f) = topm_oracle(&lists, &truths);
        prop_assert_eq!((r.precision, r.recall, r.f1), (p, rc, f));
    }

    #[test]
    fn kl_terms_are_non_negative(mean in matrix(2, 5), log_std in matrix(2, 5), alpha in prop::collection::vec(0.01f64..2.0, 5)) {
        let log_std = log_std.map(|v| v * 0.6);
        prop_assert!(kl_standard_normal(&mean, &log_std) >= 0.0);
        let prior = laplace_prior(&alpha).unwrap();
        prop_assert!(kl_logistic_normal(&mean, &log_std, &prior) >= 0.0);
    }

    #[test]
    fn softmax_rows_lie_on_simplex(m in matrix(3, 6)) {
        let p = row_softmax(&m);
        let lp = row_log_softmax(&m);
        for r in 0..3 {
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.row(r).iter().all(|&x| (0.0..=1.0).contains(&x)));
            for c in 0..6 {
                prop_assert!((lp.get(r, c).exp() - p.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn npmi_is_bounded(sets in prop::collection::vec(prop::collection::btree_set(0usize..6, 1..4), 1..20)) {
        let co = Cooccurrence::from_sets(6, sets.into_iter().map(|s| s.into_iter().collect()));
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    let v = co.npmi(i, j);
                    prop_assert!((-1.0..=1.0 + 1e-12).contains(&v), "{}", v);
                }
            }
        }
    }

    #[test]
    fn classification_is_order_invariant(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let split_pairs = |v: &[(usize, usize)]| -> (Vec<usize>, Vec<usize>) { v.iter().copied().unzip() };
        let (p1, t1) = split_pairs(&pairs);
        let (p2, t2) = split_pairs(&shuffled);
        let a = classification_metrics(&p1, &t1, 3).unwrap();
        let b = classification_metrics(&p2, &t2, 3).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-12 && (a.precision - b.precision).abs() < 1e-12);
    }
}

#[test]
fn topm_hand_case() {
    // W = {a,b,c}, Y = {a,d}
    let r = topm_metrics(&[vec![0, 1, 2]], &[BTreeSet::from([0, 3])]).unwrap();
    assert_eq!(r.precision, 1.0 / 3.0);
    assert_eq!(r.recall, 0.5);
    assert_eq!(r.f1, 0.4);
}

#[test]
fn macro_precision_hand_case() {
    let r = classification_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
    assert_eq!(r.precision, 0.25);
    assert_eq!(r.recall, 0.5);
}

#[test]
fn kl_is_zero_at_prior() {
    let mean = DenseMatrix::zeros(3, 4);
    assert_eq!(kl_standard_normal(&mean, &DenseMatrix::zeros(3, 4)), 0.0);
    let prior = laplace_prior(&[0.02, 0.5, 1.0, 3.0]).unwrap();
    let mean = DenseMatrix::from_rows(std::slice::from_ref(&prior.mean));
    let log_std = DenseMatrix::from_rows(&[prior.var.iter().map(|v| 0.5 * v.ln()).collect()]);
    assert_eq!(kl_logistic_normal(&mean, &log_std, &prior), 0.0);
}
