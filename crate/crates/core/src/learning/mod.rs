//! Classifiers over mutual-activity features: a Gini decision tree and a
//! bagged random forest, plus minority-class duplication and
//! origin-grouped k-fold cross-validation.

mod balance;
mod cv;
mod folds;
mod forest;
mod model;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgreementAnswer, DecisionKind, FrequencyAnswer, ParseError, ResponseSet};
use crate::evaluation::EvalError;
use crate::features::{compute_features, FeatureVector, SocialSnapshot, FEATURE_COUNT};

pub use balance::balance_dataset;
pub use cv::{cross_validate, fold_partitions, Algorithm, EvaluationReport, FoldSplit};
pub use folds::{make_folds, FoldAssignment};
pub use forest::{train_forest, ForestModel, ForestParams};
pub use model::{Model, ModelBundle, ModelFile, Prediction, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use tree::{train_tree, Node, Tree, TreeModel, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("class {0:?} has no instances")]
    EmptyClass(String),
    #[error("label {label:?} is not a class of target {target}")]
    UnknownLabel { target: TargetName, label: String },
    #[error("only {groups} origin groups for {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("dataset is empty")]
    EmptyData,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model target {found} does not match expected {expected}")]
    TargetMismatch {
        expected: TargetName,
        found: TargetName,
    },
    #[error("unsupported model format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetName {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Decision,
}

impl TargetName {
    pub const ALL: [TargetName; 6] = [
        TargetName::Q1,
        TargetName::Q2,
        TargetName::Q3,
        TargetName::Q4,
        TargetName::Q5,
        TargetName::Decision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetName::Q1 => "q1",
            TargetName::Q2 => "q2",
            TargetName::Q3 => "q3",
            TargetName::Q4 => "q4",
            TargetName::Q5 => "q5",
            TargetName::Decision => "decision",
        }
    }
}

impl fmt::Display for TargetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetName {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        TargetName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or(ParseError::UnknownLabel {
                kind: "target",
                token: s,
            })
    }
}

/// A prediction target and its ordered class labels. Class order breaks
/// voting ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionTarget {
    pub name: TargetName,
    pub classes: Vec<String>,
}

impl PredictionTarget {
    pub fn new(name: TargetName) -> Self {
        let classes = match name {
            TargetName::Q1 | TargetName::Q2 => {
                FrequencyAnswer::ALL.iter().map(|a| a.label().to_string()).collect()
            }
            TargetName::Q3 | TargetName::Q4 | TargetName::Q5 => {
                AgreementAnswer::ALL.iter().map(|a| a.label().to_string()).collect()
            }
            TargetName::Decision => DecisionKind::ALL.iter().map(|d| d.label().to_string()).collect(),
        };
        PredictionTarget { name, classes }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: &str) -> Result<usize, LearnError> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| LearnError::UnknownLabel {
                target: self.name,
                label: label.to_string(),
            })
    }

    /// Label this target assigns to a pair's responses and decision.
    pub fn label_for(&self, responses: &ResponseSet, decision: DecisionKind) -> String {
        match self.name {
            TargetName::Q1 => responses.q1.label(),
            TargetName::Q2 => responses.q2.label(),
            TargetName::Q3 => responses.q3.label(),
            TargetName::Q4 => responses.q4.label(),
            TargetName::Q5 => responses.q5.label(),
            TargetName::Decision => decision.label(),
        }
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub features: FeatureVector,
    pub label: String,
    /// Id of the source tuple; balancing copies keep it.
    pub origin_id: String,
    /// Every instance, original or copy, counts once.
    pub weight: u32,
}

impl LabeledInstance {
    pub fn new(features: FeatureVector, label: impl Into<String>, origin_id: impl Into<String>) -> Self {
        LabeledInstance {
            features,
            label: label.into(),
            origin_id: origin_id.into(),
            weight: 1,
        }
    }
}

/// Instances labeled for one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub target: PredictionTarget,
    pub instances: Vec<LabeledInstance>,
}

impl Dataset {
    /// Checks that every label belongs to the target.
    pub fn new(target: PredictionTarget, instances: Vec<LabeledInstance>) -> Result<Self, LearnError> {
        for inst in &instances {
            target.class_index(&inst.label)?;
        }
        Ok(Dataset { target, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Per-class instance counts in target class order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.target.class_count()];
        for inst in &self.instances {
            counts[self.target.class_index(&inst.label).expect("validated")] += 1;
        }
        counts
    }

    pub(crate) fn encode(&self) -> Vec<Sample> {
        self.instances
            .iter()
            .map(|inst| Sample {
                x: inst.features.to_array(),
                class: self.target.class_index(&inst.label).expect("validated"),
            })
            .collect()
    }

    pub(crate) fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            target: self.target.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }
}

/// Questionnaire answers and decision for one (user, friend) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub user_id: String,
    pub friend_id: String,
    pub responses: ResponseSet,
    pub decision: DecisionKind,
}

impl PairLabel {
    pub fn origin_id(&self) -> String {
        format!("{}|{}", self.user_id, self.friend_id)
    }
}

/// Joins pair labels with their features for one target.
pub fn build_dataset(
    snapshot: &SocialSnapshot,
    labels: &[PairLabel],
    target: TargetName,
) -> Result<Dataset, LearnError> {
    let target = PredictionTarget::new(target);
    let instances = labels
        .iter()
        .map(|l| {
            let features = compute_features(snapshot, &l.user_id, &l.friend_id)?;
            Ok(LabeledInstance::new(
                features,
                target.label_for(&l.responses, l.decision),
                l.origin_id(),
            ))
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    Dataset::new(target, instances)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub x: [f64; FEATURE_COUNT],
    pub class: usize,
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
