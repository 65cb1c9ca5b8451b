//! Trainable three-class classifiers behind one fit/predict contract.

pub mod forest;
pub mod knn;
pub mod nc;
pub mod tree;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::{forest_fit, ForestModel, ForestParams};
pub use knn::{knn_fit, KnnModel};
pub use nc::{nc_fit, DistanceMetric, NcModel};
pub use tree::{tree_fit, Criterion, MaxFeatures, Splitter, TreeModel, TreeParams};

use crate::baseline::{BaselineModel, RuleSystem};
use crate::dataset::{FeatureMatrix, RiskLabel};
use crate::error::{Error, Result};
use crate::seeds;

/// A model family together with one choice of hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    #[serde(rename = "nc")]
    NearestCentroid {
        metric: DistanceMetric,
        #[serde(default)]
        shrink: Option<f64>,
    },
    Knn {
        k: usize,
    },
    Tree {
        criterion: Criterion,
        splitter: Splitter,
        #[serde(default)]
        max_depth: Option<usize>,
    },
    Forest {
        criterion: Criterion,
        n_estimators: usize,
        #[serde(default)]
        max_depth: Option<usize>,
    },
    Baseline {
        rule: RuleSystem,
    },
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
}

impl ModelConfig {
    pub fn family(&self) -> &'static str {
        match self {
            ModelConfig::NearestCentroid { .. } => "nc",
            ModelConfig::Knn { .. } => "knn",
            ModelConfig::Tree { .. } => "tree",
            ModelConfig::Forest { .. } => "forest",
            ModelConfig::Baseline { .. } => "viogen",
        }
    }

    /// Canonical `key=value;...` rendering of the hyperparameters.
    pub fn params_key(&self) -> String {
        match self {
            ModelConfig::NearestCentroid { metric, shrink } => {
                format!("metric={metric};shrink={}", opt(shrink))
            }
            ModelConfig::Knn { k } => format!("k={k}"),
            ModelConfig::Tree {
                criterion,
                splitter,
                max_depth,
            } => format!(
                "criterion={};splitter={};max_depth={}",
                criterion_name(*criterion),
                match splitter {
                    Splitter::Best => "best",
                    Splitter::Random => "random",
                },
                opt(max_depth)
            ),
            ModelConfig::Forest {
                criterion,
                n_estimators,
                max_depth,
            } => format!(
                "criterion={};n_estimators={n_estimators};max_depth={}",
                criterion_name(*criterion),
                opt(max_depth)
            ),
            ModelConfig::Baseline { rule } => format!("rule={}", rule.name()),
        }
    }

    /// `family:params`, unique per grid point.
    pub fn key(&self) -> String {
        format!("{}:{}", self.family(), self.params_key())
    }

    /// Seed for fitting this configuration under `master`.
    pub fn fit_seed(&self, master: u64) -> u64 {
        seeds::derive(master, &[seeds::key_of(&self.key())])
    }

    pub fn fit(&self, train: &FeatureMatrix, seed: u64) -> Result<TrainedModel> {
        Ok(match self {
            ModelConfig::NearestCentroid { metric, shrink } => {
                TrainedModel::NearestCentroid(nc_fit(train, *metric, *shrink)?)
            }
            ModelConfig::Knn { k } => TrainedModel::Knn(knn_fit(train, *k)?),
            ModelConfig::Tree {
                criterion,
                splitter,
                max_depth,
            } => TrainedModel::Tree(tree_fit(
                train,
                TreeParams::new(*criterion, *splitter, *max_depth),
                seed,
            )?),
            ModelConfig::Forest {
                criterion,
                n_estimators,
                max_depth,
            } => TrainedModel::Forest(forest_fit(
                train,
                ForestParams::new(*criterion, *n_estimators, *max_depth),
                seed,
            )?),
            ModelConfig::Baseline { rule } => TrainedModel::Baseline(BaselineModel::new(rule.clone())),
        })
    }
}

fn criterion_name(c: Criterion) -> &'static str {
    match c {
        Criterion::Gini => "gini",
        Criterion::Entropy => "entropy",
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Serializable fitted state of any supported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrainedModel {
    Baseline(BaselineModel),
    NearestCentroid(NcModel),
    Knn(KnnModel),
    Tree(TreeModel),
    Forest(ForestModel),
}

impl TrainedModel {
    pub fn predict_row(&self, x: &[f64]) -> Result<RiskLabel> {
        match self {
            TrainedModel::NearestCentroid(m) => m.predict_row(x),
            TrainedModel::Knn(m) => m.predict_row(x),
            TrainedModel::Tree(m) => m.predict_row(x),
            TrainedModel::Forest(m) => m.predict_row(x),
            TrainedModel::Baseline(b) => match &b.scoring {
                Some(s) => Ok(b.rule.apply(s.classify_row(x)?)),
                None => Err(Error::InvalidInput(
                    "baseline without scoring weights needs case scores, not a bare row".into(),
                )),
            },
        }
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<RiskLabel>> {
        match self {
            TrainedModel::Baseline(b) => b.predict(m),
            _ => (0..m.n_rows())
                .into_par_iter()
                .map(|i| self.predict_row(m.row(i)))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e))
    }
}
