use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub folds: Vec<Fold>,
}

impl FoldSplit {
    /// SHA-256 over the test index sets; equal fingerprints mean equal splits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.folds.len() as u64).to_le_bytes());
        for f in &self.folds {
            h.update((f.test.len() as u64).to_le_bytes());
            for &i in &f.test {
                h.update((i as u64).to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Stratified, seeded `k`-fold partition of `labels`.
///
/// Each class is shuffled independently, the shuffled classes are
/// concatenated, and position `p` of the concatenation goes to fold `p mod k`.
/// Fold sizes therefore differ by at most one, as do per-class counts.
pub fn stratified_k_fold(labels: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput { op: "k_fold_split" });
    }
    let classes = labels.iter().max().unwrap() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in 0..classes.max(2) {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::InsufficientClass {
                class,
                count: members.len(),
                folds: k,
            });
        }
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut tests = vec![Vec::new(); k];
    for (p, &i) in order.iter().enumerate() {
        tests[p % k].push(i);
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect();
    Ok(FoldSplit { folds })
}

pub fn five_fold_split(dataset: &Dataset, target: Target, seed: u64) -> Result<FoldSplit> {
    stratified_k_fold(&dataset.labels(target)?, 5, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousand_two_hundred_eighty_records_give_folds_of_256() {
        let labels: Vec<usize> = (0..1280).map(|i| usize::from(i % 7 < 3)).collect();
        let split = stratified_k_fold(&labels, 5, 42).unwrap();
        assert!(split.folds.iter().all(|f| f.test.len() == 256 && f.train.len() == 1024));
    }

    #[test]
    fn small_class_rejected() {
        let labels = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let err = stratified_k_fold(&labels, 5, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientClass { class: 1, count: 4, folds: 5 }));
        let err = stratified_k_fold(&[0; 10], 5, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientClass { class: 1, count: 0, .. }));
    }

    #[test]
    fn fingerprint_tracks_seed() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let a = stratified_k_fold(&labels, 5, 1).unwrap();
        let b = stratified_k_fold(&labels, 5, 1).unwrap();
        let c = stratified_k_fold(&labels, 5, 2).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
