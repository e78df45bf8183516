use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ForestModel, LearnError, PredictionTarget, TargetName, TreeModel};
use crate::features::FeatureVector;

pub const MODEL_FORMAT: &str = "friend-audit-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Per-class probabilities in target class order; sums to 1.
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
}

impl Model {
    pub fn target(&self) -> &PredictionTarget {
        match self {
            Model::Tree(m) => &m.target,
            Model::Forest(m) => &m.target,
        }
    }

    pub fn predict(&self, features: &FeatureVector) -> Prediction {
        let (label, distribution) = match self {
            Model::Tree(m) => m.predict(features),
            Model::Forest(m) => m.predict(features),
        };
        Prediction {
            label,
            distribution,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            payload: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let file: ModelFile<Model> = serde_json::from_str(text)?;
        file.check()?;
        Ok(file.payload)
    }
}

/// Versioned envelope around a serialized model or bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile<T = Model> {
    pub format: String,
    pub version: u32,
    #[serde(rename = "model")]
    pub payload: T,
}

impl<T> ModelFile<T> {
    fn check(&self) -> Result<(), LearnError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Format {
                format: self.format.clone(),
                version: self.version,
            });
        }
        Ok(())
    }
}

/// One model per prediction target, as needed for autonomous audits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub models: BTreeMap<TargetName, Model>,
}

impl ModelBundle {
    pub fn insert(&mut self, model: Model) {
        self.models.insert(model.target().name, model);
    }

    pub fn get(&self, target: TargetName) -> Option<&Model> {
        self.models.get(&target)
    }

    pub fn missing(&self) -> Vec<TargetName> {
        TargetName::ALL
            .into_iter()
            .filter(|t| !self.models.contains_key(t))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            payload: self.clone(),
        })
        .expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let file: ModelFile<ModelBundle> = serde_json::from_str(text)?;
        file.check()?;
        for (name, model) in &file.payload.models {
            if model.target().name != *name {
                return Err(LearnError::TargetMismatch {
                    expected: *name,
                    found: model.target().name,
                });
            }
        }
        Ok(file.payload)
    }
}
