use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::corpus::{Label, RequestCorpus, Split};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: RequestCorpus,
    pub test: RequestCorpus,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Stratified shuffle split. The overall train size is
/// `round(fraction * n)`; it is apportioned across labels by largest
/// remainder, ties going to the lower label index. Within each label the
/// records are shuffled with the seed; each side keeps corpus order.
pub fn split_corpus(corpus: &RequestCorpus, train_fraction: f64, seed: u64) -> Result<CorpusSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::OutOfRange { value: train_fraction, expected: "(0, 1)" });
    }
    let counts = corpus.label_counts();
    let n = corpus.len();
    let total_train = (train_fraction * n as f64).round() as usize;

    let quotas: Vec<f64> = counts.iter().map(|&c| c as f64 * train_fraction).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] > 0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut remaining = total_train.saturating_sub(alloc.iter().sum());
    for &l in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[l] < counts[l] {
            alloc[l] += 1;
            remaining -= 1;
        }
    }

    let train_total: usize = alloc.iter().sum();
    if train_total == 0 || train_total == n {
        return Err(Error::DegenerateSplit(format!(
            "{train_total} of {n} records would go to train at fraction {train_fraction}"
        )));
    }

    let mut rng = rng::seeded(seed);
    let mut in_train = vec![false; n];
    for label in Label::ALL {
        let mut idx: Vec<usize> =
            corpus.records.iter().enumerate().filter(|(_, r)| r.label == label).map(|(i, _)| i).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(alloc[label.index()]) {
            in_train[i] = true;
        }
    }

    let mut train = Vec::with_capacity(train_total);
    let mut test = Vec::with_capacity(n - train_total);
    for (r, &t) in corpus.records.iter().zip(&in_train) {
        let mut r = r.clone();
        if t {
            r.split = Some(Split::Train);
            train.push(r);
        } else {
            r.split = Some(Split::Test);
            test.push(r);
        }
    }
    Ok(CorpusSplit { train: RequestCorpus::new(train), test: RequestCorpus::new(test), train_fraction, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawRequestRecord;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn corpus(normal: usize, abnormal: usize) -> RequestCorpus {
        (0..normal + abnormal)
            .map(|i| {
                let label = if i < normal { Label::Normal } else { Label::Abnormal };
                RawRequestRecord::new(format!("r{i:03}"), format!("get /p{i}"), label)
            })
            .collect()
    }

    /// Brute-force stratified counts: enumerate every per-label train
    /// allocation and keep those with the right total and each label within
    /// one record of its exact quota.
    fn admissible(counts: [usize; 2], fraction: f64) -> Vec<[usize; 2]> {
        let total = (fraction * (counts[0] + counts[1]) as f64).round() as usize;
        let mut out = Vec::new();
        for a in 0..=counts[0] {
            for b in 0..=counts[1] {
                let ok = a + b == total
                    && (a as f64 - counts[0] as f64 * fraction).abs() <= 1.0
                    && (b as f64 - counts[1] as f64 * fraction).abs() <= 1.0;
                if ok {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    #[test]
    fn ten_records_seventy_percent() {
        let s = split_corpus(&corpus(5, 5), 0.7, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7, 3));
        let c = s.train.label_counts();
        assert!(admissible([5, 5], 0.7).contains(&c), "{c:?}");
        assert!((3..=4).contains(&c[0]) && (3..=4).contains(&c[1]));
    }

    #[test]
    fn two_records_half() {
        let s = split_corpus(&corpus(1, 1), 0.5, 9).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        assert_ne!(s.train.records[0].label, s.test.records[0].label);
    }

    #[test]
    fn deterministic() {
        let c = corpus(30, 12);
        assert_eq!(split_corpus(&c, 0.7, 42).unwrap(), split_corpus(&c, 0.7, 42).unwrap());
        assert_ne!(split_corpus(&c, 0.7, 42).unwrap().train, split_corpus(&c, 0.7, 43).unwrap().train);
    }

    #[test]
    fn degenerate() {
        assert!(matches!(split_corpus(&corpus(1, 0), 0.7, 0), Err(Error::DegenerateSplit(_))));
        assert!(matches!(split_corpus(&corpus(3, 3), 1.0, 0), Err(Error::OutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn partitions(normal in 1usize..40, abnormal in 0usize..40, frac in 0.05f64..0.95, seed: u64) {
            let c = corpus(normal, abnormal);
            if let Ok(s) = split_corpus(&c, frac, seed) {
                prop_assert_eq!(s.train.len() + s.test.len(), c.len());
                let train: HashSet<_> = s.train.iter().map(|r| r.id.clone()).collect();
                prop_assert!(s.test.iter().all(|r| !train.contains(&r.id)));
                prop_assert!(admissible([normal, abnormal], frac).contains(&s.train.label_counts()));
            }
        }
    }
}
