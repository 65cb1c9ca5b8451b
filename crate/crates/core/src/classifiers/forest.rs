use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::knn::majority;
use crate::classifiers::tree::{fit_on_rows, Criterion, MaxFeatures, Splitter, TrainingView, TreeModel, TreeParams};
use crate::dataset::{FeatureMatrix, RiskLabel};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub criterion: Criterion,
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
}

impl ForestParams {
    pub fn new(criterion: Criterion, n_estimators: usize, max_depth: Option<usize>) -> Self {
        Self {
            criterion,
            n_estimators,
            max_depth,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<TreeModel>,
}

/// Bagged trees; tree `t` draws its bootstrap sample and split features from
/// a stream seeded by `(seed, t)`, so the forest does not depend on how the
/// trees are scheduled.
pub fn forest_fit(train: &FeatureMatrix, params: ForestParams, seed: u64) -> Result<ForestModel> {
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Fit("no training rows".into()));
    }
    if params.n_estimators == 0 {
        return Err(Error::InvalidInput("n_estimators must be positive".into()));
    }
    if params.max_depth == Some(0) {
        return Err(Error::InvalidInput("max_depth must be positive".into()));
    }
    let view = TrainingView::new(train);
    let tree_params = TreeParams {
        criterion: params.criterion,
        splitter: Splitter::Best,
        max_depth: params.max_depth,
        max_features: params.max_features,
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds::rng_for(seed, &[t as u64]);
            let rows = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_on_rows(&view, rows, tree_params, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        params,
        seed,
        trees,
    })
}

impl ForestModel {
    /// Majority over tree votes, ties toward higher risk.
    pub fn predict_row(&self, x: &[f64]) -> Result<RiskLabel> {
        let mut votes = [0usize; 3];
        for t in &self.trees {
            votes[t.predict_row(x)?.index()] += 1;
        }
        Ok(majority(&votes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tree::tree_fit;
    use RiskLabel::{High, Low, No};

    fn data() -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..90)
            .map(|i| vec![(i % 3) as f64, ((i / 3) % 2) as f64, (i % 5) as f64, (i % 7) as f64])
            .collect();
        let labels: Vec<RiskLabel> = (0..90)
            .map(|i| match (i % 3, i % 5) {
                (0, _) => No,
                (_, 0 | 1) => High,
                _ => Low,
            })
            .collect();
        FeatureMatrix::from_rows(&rows, &labels).unwrap()
    }

    #[test]
    fn tree_count_and_determinism() {
        let m = data();
        let p = ForestParams::new(Criterion::Gini, 7, Some(4));
        let a = forest_fit(&m, p, 11).unwrap();
        assert_eq!(a.trees.len(), 7);
        assert_eq!(a, forest_fit(&m, p, 11).unwrap());
        assert_ne!(a, forest_fit(&m, p, 12).unwrap());
    }

    #[test]
    fn singleton_ensemble_matches_its_tree() {
        let m = data();
        let p = ForestParams {
            bootstrap: false,
            ..ForestParams::new(Criterion::Entropy, 1, None)
        };
        let forest = forest_fit(&m, p, 3).unwrap();
        for row in m.rows() {
            assert_eq!(forest.predict_row(row).unwrap(), forest.trees[0].predict_row(row).unwrap());
        }
        // with all features and no bootstrap it is exactly a plain tree
        let full = ForestParams { max_features: MaxFeatures::All, ..p };
        let forest = forest_fit(&m, full, 3).unwrap();
        let tree = tree_fit(&m, TreeParams::new(Criterion::Entropy, Splitter::Best, None), 0).unwrap();
        assert_eq!(forest.trees[0].nodes, tree.nodes);
    }

    #[test]
    fn unanimous_trees_decide() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], &[Low; 3]).unwrap();
        let forest = forest_fit(&m, ForestParams::new(Criterion::Gini, 5, None), 0).unwrap();
        assert_eq!(forest.predict_row(&[9.0]).unwrap(), Low);
    }

    #[test]
    fn invalid_params() {
        let m = data();
        assert!(forest_fit(&m, ForestParams::new(Criterion::Gini, 0, None), 0).is_err());
        assert!(forest_fit(&m, ForestParams::new(Criterion::Gini, 2, Some(0)), 0).is_err());
    }
}
