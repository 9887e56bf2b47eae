use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::seeded;
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

/// Disjoint train/valid/test id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: Vec<String>,
    pub valid_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn len(&self) -> usize {
        self.train_ids.len() + self.valid_ids.len() + self.test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_partition_of(&self, ids: &[String]) -> bool {
        let all: Vec<&String> = self.train_ids.iter().chain(&self.valid_ids).chain(&self.test_ids).collect();
        let set: HashSet<&String> = all.iter().copied().collect();
        set.len() == all.len() && all.len() == ids.len() && ids.iter().all(|i| set.contains(i))
    }
}

/// Shuffles `ids` with `seed` and cuts the result into the requested sizes.
pub fn split_ids(ids: &[String], counts: (usize, usize, usize), seed: u64) -> Result<SplitSpec> {
    let (train, valid, test) = counts;
    if train + valid + test != ids.len() {
        return Err(Error::SizeMismatch(format!(
            "split counts {train}+{valid}+{test} = {} but the dataset has {} entries",
            train + valid + test,
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut seeded(seed));
    let test_ids = shuffled.split_off(train + valid);
    let valid_ids = shuffled.split_off(train);
    Ok(SplitSpec { train_ids: shuffled, valid_ids, test_ids, seed })
}

pub fn split_dataset(manifest: &DatasetManifest, counts: (usize, usize, usize), seed: u64) -> Result<SplitSpec> {
    split_ids(&manifest.ids(), counts, seed)
}
