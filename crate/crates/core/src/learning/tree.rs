use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Dataset, LearnError, PredictionTarget, Sample};
use crate::features::{FeatureVector, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf_size: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training class counts reaching this leaf.
    Leaf { counts: Vec<u32> },
}

/// Binary tree stored as a flat node list with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_counts(&self, x: &[f64; FEATURE_COUNT]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Class distribution of the leaf `x` falls into.
    pub fn distribution(&self, x: &[f64; FEATURE_COUNT]) -> Vec<f64> {
        let counts = self.leaf_counts(x);
        let total: u32 = counts.iter().sum();
        counts
            .iter()
            .map(|&c| f64::from(c) / f64::from(total))
            .collect()
    }

    pub fn predict_class(&self, x: &[f64; FEATURE_COUNT]) -> usize {
        let counts = self.leaf_counts(x);
        let as_f: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
        argmax(&as_f)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// A single trained decision tree with its target and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub target: PredictionTarget,
    pub params: TreeParams,
    pub tree: Tree,
}

impl TreeModel {
    pub fn predict(&self, features: &FeatureVector) -> (String, Vec<f64>) {
        let dist = self.tree.distribution(&features.to_array());
        (self.target.classes[argmax(&dist)].clone(), dist)
    }
}

/// Candidate features for one node.
pub(crate) enum FeatureChoice<'a, R: Rng> {
    All,
    /// Draw this many features per node; if none of them admits a split,
    /// keep drawing from the rest.
    Sampled { per_split: usize, rng: &'a mut R },
}

struct Best {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

const TIE_EPS: f64 = 1e-12;

impl Best {
    fn beats(&self, other: &Option<Best>) -> bool {
        let Some(o) = other else {
            return true;
        };
        if (self.impurity - o.impurity).abs() <= TIE_EPS {
            (self.feature, self.threshold) < (o.feature, o.threshold)
        } else {
            self.impurity < o.impurity
        }
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

struct Builder<'s> {
    samples: &'s [Sample],
    classes: usize,
    params: TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn best_split_on(&self, idx: &mut [usize], feature: usize, current: &mut Option<Best>) {
        let min_leaf = self.params.min_leaf_size.max(1);
        idx.sort_by(|&a, &b| {
            self.samples[a].x[feature]
                .partial_cmp(&self.samples[b].x[feature])
                .unwrap_or(Ordering::Equal)
        });
        let n = idx.len();
        let mut total = vec![0usize; self.classes];
        for &i in idx.iter() {
            total[self.samples[i].class] += 1;
        }
        let mut left = vec![0usize; self.classes];
        for pos in 0..n - 1 {
            let c = self.samples[idx[pos]].class;
            left[c] += 1;
            total[c] -= 1;
            let here = self.samples[idx[pos]].x[feature];
            let next = self.samples[idx[pos + 1]].x[feature];
            if here == next {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let impurity = (n_left as f64 * gini(&left, n_left)
                + n_right as f64 * gini(&total, n_right))
                / n as f64;
            let candidate = Best {
                impurity,
                feature,
                threshold: (here + next) / 2.0,
            };
            if candidate.beats(current) {
                *current = Some(candidate);
            }
        }
    }

    fn grow<R: Rng>(&mut self, mut idx: Vec<usize>, depth: usize, choice: &mut FeatureChoice<'_, R>) -> usize {
        let mut counts = vec![0usize; self.classes];
        for &i in &idx {
            counts[self.samples[i].class] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            counts: counts.iter().map(|&c| c as u32).collect(),
        });
        if pure || depth_capped || idx.len() < 2 * self.params.min_leaf_size.max(1) {
            return slot;
        }

        let mut best: Option<Best> = None;
        match choice {
            FeatureChoice::All => {
                for f in 0..FEATURE_COUNT {
                    self.best_split_on(&mut idx, f, &mut best);
                }
            }
            FeatureChoice::Sampled { per_split, rng } => {
                let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
                order.shuffle(*rng);
                let (first, rest) = order.split_at((*per_split).min(FEATURE_COUNT));
                for &f in first {
                    self.best_split_on(&mut idx, f, &mut best);
                }
                for &f in rest {
                    if best.is_some() {
                        break;
                    }
                    self.best_split_on(&mut idx, f, &mut best);
                }
            }
        }
        let Some(best) = best else {
            return slot;
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.samples[i].x[best.feature] <= best.threshold);
        let left = self.grow(left_idx, depth + 1, choice);
        let right = self.grow(right_idx, depth + 1, choice);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }
}

pub(crate) fn build_tree<R: Rng>(
    samples: &[Sample],
    idx: Vec<usize>,
    classes: usize,
    params: TreeParams,
    mut choice: FeatureChoice<'_, R>,
) -> Tree {
    let mut builder = Builder {
        samples,
        classes,
        params,
        nodes: Vec::new(),
    };
    builder.grow(idx, 0, &mut choice);
    Tree {
        nodes: builder.nodes,
    }
}

/// Greedy top-down induction with Gini impurity. Thresholds are midpoints
/// between consecutive distinct values; ties go to the lowest feature index,
/// then the lowest threshold.
pub fn train_tree(data: &Dataset, params: TreeParams) -> Result<TreeModel, LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyData);
    }
    let samples = data.encode();
    let idx = (0..samples.len()).collect();
    let tree = build_tree::<rand_chacha::ChaCha8Rng>(
        &samples,
        idx,
        data.target.class_count(),
        params,
        FeatureChoice::All,
    );
    Ok(TreeModel {
        target: data.target.clone(),
        params,
        tree,
    })
}
