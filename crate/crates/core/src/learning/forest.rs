use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, FeatureChoice};
use super::{argmax, Dataset, LearnError, PredictionTarget, Tree, TreeParams};
use crate::features::{FeatureVector, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    pub features_per_split: usize,
    pub seed: u64,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    /// 100 trees, ceil(sqrt(7)) = 3 features per split, unlimited depth.
    fn default() -> Self {
        ForestParams {
            tree_count: 100,
            features_per_split: 3,
            seed: 0,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.tree_count == 0 {
            return Err(LearnError::InvalidParams("tree_count must be at least 1".into()));
        }
        if !(1..=FEATURE_COUNT).contains(&self.features_per_split) {
            return Err(LearnError::InvalidParams(format!(
                "features_per_split must be in 1..={FEATURE_COUNT}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub target: PredictionTarget,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Majority vote. The distribution is the share of trees voting for
    /// each class; ties go to the earlier class.
    pub fn predict(&self, features: &FeatureVector) -> (String, Vec<f64>) {
        let x = features.to_array();
        let mut votes = vec![0u32; self.target.class_count()];
        for tree in &self.trees {
            votes[tree.predict_class(&x)] += 1;
        }
        let n = self.trees.len() as f64;
        let dist: Vec<f64> = votes.iter().map(|&v| f64::from(v) / n).collect();
        (self.target.classes[argmax(&dist)].clone(), dist)
    }
}

/// Trains `tree_count` trees, each on a seeded bootstrap sample (when
/// enabled) with seeded per-split feature sampling. Tree `t` draws from
/// stream `t` of a ChaCha generator keyed by `seed`, so the result does not
/// depend on thread scheduling.
pub fn train_forest(data: &Dataset, params: ForestParams) -> Result<ForestModel, LearnError> {
    params.validate()?;
    if data.is_empty() {
        return Err(LearnError::EmptyData);
    }
    let samples = data.encode();
    let n = samples.len();
    let classes = data.target.class_count();
    let trees = (0..params.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let choice = if params.features_per_split >= FEATURE_COUNT {
                FeatureChoice::All
            } else {
                FeatureChoice::Sampled {
                    per_split: params.features_per_split,
                    rng: &mut rng,
                }
            };
            build_tree(&samples, idx, classes, params.tree, choice)
        })
        .collect();
    Ok(ForestModel {
        target: data.target.clone(),
        params,
        trees,
    })
}
