use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    balance_dataset, make_folds, train_forest, train_tree, Dataset, FoldAssignment, ForestParams,
    LearnError, Model, PredictionTarget, TreeParams,
};
use crate::evaluation::{class_metrics, ClassMetrics, ConfusionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum Algorithm {
    Tree(TreeParams),
    Forest(ForestParams),
}

impl Algorithm {
    pub fn train(&self, data: &Dataset) -> Result<Model, LearnError> {
        Ok(match self {
            Algorithm::Tree(p) => Model::Tree(train_tree(data, *p)?),
            Algorithm::Forest(p) => Model::Forest(train_forest(data, *p)?),
        })
    }

    fn for_fold(&self, fold: usize) -> Algorithm {
        match *self {
            Algorithm::Forest(p) => Algorithm::Forest(ForestParams {
                seed: p.seed.wrapping_add(fold as u64),
                ..p
            }),
            a => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Instance indices of each fold's training and held-out sets.
pub fn fold_partitions(data: &Dataset, folds: &FoldAssignment) -> Vec<FoldSplit> {
    (0..folds.k)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len())
                .partition(|&i| folds.fold(&data.instances[i].origin_id) == Some(fold));
            FoldSplit { fold, train, test }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub target: PredictionTarget,
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    pub pipeline: String,
    pub original_size: usize,
    pub balanced_size: usize,
    /// Held-out instances per fold.
    pub fold_sizes: Vec<usize>,
    /// Origin groups per fold.
    pub fold_groups: Vec<usize>,
    /// No origin id appears on both sides of any split.
    pub leakage_free: bool,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics<f64>,
}

impl EvaluationReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "target: {}\nalgorithm: {}\nk: {}  seed: {}\ninstances: {} original, {} after balancing\nfold sizes: {:?}\n\n",
            self.target.name,
            serde_json::to_string(&self.algorithm).expect("serializable"),
            self.k,
            self.seed,
            self.original_size,
            self.balanced_size,
            self.fold_sizes,
        );
        out.push_str(&self.confusion.render());
        out.push('\n');
        out.push_str(&self.metrics.render());
        out
    }
}

/// Balance, assign origin groups to folds, train on k-1 folds and test on
/// the held-out one, then score the pooled confusion matrix.
///
/// Forests in fold `f` are seeded with `params.seed + f`.
pub fn cross_validate(
    data: &Dataset,
    algorithm: Algorithm,
    k: usize,
    seed: u64,
) -> Result<EvaluationReport, LearnError> {
    if k < 2 {
        return Err(LearnError::InvalidK(k));
    }
    let balanced = balance_dataset(data, seed)?;
    let folds = make_folds(&balanced, k, seed)?;
    let splits = fold_partitions(&balanced, &folds);

    let leakage_free = splits.iter().all(|s| {
        let held: HashSet<&str> = s.test.iter().map(|&i| balanced.instances[i].origin_id.as_str()).collect();
        s.train
            .iter()
            .all(|&i| !held.contains(balanced.instances[i].origin_id.as_str()))
    });

    let per_fold: Vec<ConfusionMatrix> = splits
        .par_iter()
        .map(|split| -> Result<ConfusionMatrix, LearnError> {
            let model = algorithm.for_fold(split.fold).train(&balanced.subset(&split.train))?;
            let mut m = ConfusionMatrix::zeros(&balanced.target.classes);
            for &i in &split.test {
                let inst = &balanced.instances[i];
                m.record(&inst.label, &model.predict(&inst.features).label)?;
            }
            Ok(m)
        })
        .collect::<Result<_, _>>()?;

    let mut confusion = ConfusionMatrix::zeros(&balanced.target.classes);
    for m in &per_fold {
        confusion.merge(m);
    }
    let metrics = class_metrics(&confusion)?;

    Ok(EvaluationReport {
        target: data.target.clone(),
        algorithm,
        k,
        seed,
        pipeline: "balance by duplication -> origin-grouped folds stratified by origin label -> train k-1 / test 1 -> pooled confusion matrix".into(),
        original_size: data.len(),
        balanced_size: balanced.len(),
        fold_sizes: splits.iter().map(|s| s.test.len()).collect(),
        fold_groups: folds.group_counts(),
        leakage_free,
        confusion,
        metrics,
    })
}
