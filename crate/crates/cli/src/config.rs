use std::path::{Path, PathBuf};

use serde::Deserialize;

use friend_audit_core::learning::{Algorithm, ForestParams, TreeParams};
use friend_audit_core::quality::QualityConfig;
use friend_audit_core::rules::RuleTable;
use friend_audit_core::session::SessionConfig;
use friend_audit_core::synth::PopulationParams;

/// Settings read from the `--config` TOML file. Every key is optional.
///
/// ```toml
/// sandbox_enabled = true
/// rules = "my_rules.txt"
/// min_friends = 20
///
/// [quality]
/// min_avg_response_seconds = 3.0
/// bogus_friend_ids = ["bogus-1", "bogus-2", "bogus-3"]
/// attention_check_required = true
///
/// [learner]
/// trees = 100
/// features_per_split = 3
/// max_depth = 12
/// min_leaf_size = 1
///
/// [population]
/// user_count = 57
/// friends_per_user = [20, 30]
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sandbox_enabled: bool,
    /// Rule table file; the canonical table when absent. Relative paths
    /// resolve against the config file's directory.
    pub rules: Option<PathBuf>,
    pub min_friends: Option<usize>,
    pub quality: QualityConfig,
    pub learner: LearnerConfig,
    pub population: PopulationParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            sandbox_enabled: true,
            rules: None,
            min_friends: None,
            quality: QualityConfig::default(),
            learner: LearnerConfig::default(),
            population: PopulationParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub trees: usize,
    pub features_per_split: usize,
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        let forest = ForestParams::default();
        LearnerConfig {
            trees: forest.tree_count,
            features_per_split: forest.features_per_split,
            max_depth: forest.tree.max_depth,
            min_leaf_size: forest.tree.min_leaf_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlgoChoice {
    Tree,
    Forest,
}

impl LearnerConfig {
    pub fn algorithm(&self, choice: AlgoChoice, seed: u64) -> Algorithm {
        let tree = TreeParams {
            max_depth: self.max_depth,
            min_leaf_size: self.min_leaf_size,
        };
        match choice {
            AlgoChoice::Tree => Algorithm::Tree(tree),
            AlgoChoice::Forest => Algorithm::Forest(ForestParams {
                tree_count: self.trees,
                features_per_split: self.features_per_split,
                seed,
                bootstrap: true,
                tree,
            }),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: Config = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let (Some(rules), Some(dir)) = (&config.rules, path.parent()) {
            if rules.is_relative() {
                config.rules = Some(dir.join(rules));
            }
        }
        config.quality.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn rule_table(&self) -> Result<RuleTable, String> {
        match &self.rules {
            None => Ok(RuleTable::canonical(self.sandbox_enabled)),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                RuleTable::parse(&text, self.sandbox_enabled).map_err(|e| format!("{}: {e}", path.display()))
            }
        }
    }

    pub fn session_config(&self) -> Result<SessionConfig, String> {
        Ok(SessionConfig {
            table: self.rule_table()?,
            quality: self.quality.clone(),
            min_friends: self.min_friends,
        })
    }
}
