use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::seeded;
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

/// `k` disjoint folds labelled `A`, `B`, ... whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
    pub k: usize,
}

/// One cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotation {
    pub train_folds: Vec<char>,
    pub test_fold: char,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

pub fn fold_label(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

/// Shuffles ids with `seed` and deals them into `k` contiguous folds; the
/// first `n % k` folds receive one extra id.
pub fn make_kfold_ids(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2 (got {k})")));
    }
    if k > ids.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds dataset size {}", ids.len())));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut seeded(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut rest = shuffled.as_slice();
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        folds.push(head.to_vec());
        rest = tail;
    }
    Ok(FoldPlan { folds, k })
}

pub fn make_kfold(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    make_kfold_ids(&manifest.ids(), k, seed)
}

impl FoldPlan {
    pub fn labels(&self) -> Vec<char> {
        (0..self.k).map(fold_label).collect()
    }

    pub fn is_partition_of(&self, ids: &[String]) -> bool {
        let all: Vec<&String> = self.folds.iter().flatten().collect();
        let set: HashSet<&String> = all.iter().copied().collect();
        set.len() == all.len() && all.len() == ids.len() && ids.iter().all(|i| set.contains(i))
    }

    /// Round `r` (0-based) trains on folds `r, r+1, ..., r+k-2` (cyclically)
    /// and tests on fold `r-1`: round 0 trains on A..E and tests on F when k = 6.
    pub fn rotation(&self, r: usize) -> Rotation {
        assert!(r < self.k, "rotation {r} out of range for k = {}", self.k);
        let test = (r + self.k - 1) % self.k;
        let train: Vec<usize> = (0..self.k - 1).map(|j| (r + j) % self.k).collect();
        Rotation {
            train_folds: train.iter().map(|&i| fold_label(i)).collect(),
            test_fold: fold_label(test),
            train_ids: train.iter().flat_map(|&i| self.folds[i].iter().cloned()).collect(),
            test_ids: self.folds[test].clone(),
        }
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        (0..self.k).map(|r| self.rotation(r)).collect()
    }

    /// Like [`FoldPlan::rotation`] but carves `n_valid` ids (seeded shuffle)
    /// out of the training side. Returns `(train, valid, test)`.
    pub fn rotation_with_validation(
        &self,
        r: usize,
        n_valid: usize,
        seed: u64,
    ) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
        let rot = self.rotation(r);
        if n_valid >= rot.train_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot carve {n_valid} validation ids from {} training ids",
                rot.train_ids.len()
            )));
        }
        let mut train = rot.train_ids;
        train.shuffle(&mut seeded(seed ^ r as u64));
        let valid = train.split_off(train.len() - n_valid);
        Ok((train, valid, rot.test_ids))
    }
}
