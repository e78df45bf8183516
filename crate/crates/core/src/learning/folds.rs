use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnError};

/// Fold index per origin group. All copies of a tuple share a fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, origin_id: &str) -> Option<usize> {
        self.fold_of.get(origin_id).copied()
    }

    /// Number of origin groups per fold.
    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &f in self.fold_of.values() {
            counts[f] += 1;
        }
        counts
    }
}

/// Assigns origin groups to `k` folds.
///
/// Groups are bucketed by label, shuffled within each bucket, and dealt
/// round-robin with one counter running across buckets. Fold group counts
/// therefore differ by at most one, and each label is spread evenly.
pub fn make_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment, LearnError> {
    if k < 2 {
        return Err(LearnError::InvalidK(k));
    }
    let mut label_of: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in &data.instances {
        let class = data.target.class_index(&inst.label)?;
        label_of.entry(inst.origin_id.as_str()).or_insert(class);
    }
    if label_of.len() < k {
        return Err(LearnError::TooFewGroups {
            groups: label_of.len(),
            k,
        });
    }
    let mut buckets: Vec<Vec<&str>> = vec![Vec::new(); data.target.class_count()];
    for (origin, class) in &label_of {
        buckets[*class].push(origin);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = BTreeMap::new();
    let mut next = 0usize;
    for bucket in &mut buckets {
        bucket.shuffle(&mut rng);
        for origin in bucket.iter() {
            fold_of.insert(origin.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}
