//! CART-style decision trees.
//!
//! Features with few distinct values (every one-hot column) are pre-binned
//! once per training matrix so split search is a histogram sweep instead of a
//! sort. Candidate thresholds are the same either way: midpoints between
//! consecutive distinct values present in the node.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::knn::majority;
use crate::dataset::{FeatureMatrix, RiskLabel};
use crate::error::{Error, Result};
use crate::seeds;

const MAX_BINS: usize = 256;
const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    Best,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(sqrt(d))` features drawn afresh at every split.
    Sqrt,
}

impl MaxFeatures {
    fn count(self, width: usize) -> usize {
        match self {
            MaxFeatures::All => width,
            MaxFeatures::Sqrt => ((width as f64).sqrt().ceil() as usize).clamp(1, width.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub splitter: Splitter,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
}

impl TreeParams {
    pub fn new(criterion: Criterion, splitter: Splitter, max_depth: Option<usize>) -> Self {
        Self {
            criterion,
            splitter,
            max_depth,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: [u32; 3],
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub params: TreeParams,
    pub width: usize,
    pub nodes: Vec<Node>,
}

enum Column {
    Binned { values: Vec<f64>, codes: Vec<u16> },
    Raw,
}

/// Column layout of a training matrix, shared by every tree fit on it.
pub(crate) struct TrainingView<'a> {
    matrix: &'a FeatureMatrix,
    columns: Vec<Column>,
    labels: Vec<u8>,
}

impl<'a> TrainingView<'a> {
    pub(crate) fn new(matrix: &'a FeatureMatrix) -> Self {
        let n = matrix.n_rows();
        let width = matrix.width();
        let columns = (0..width)
            .map(|j| {
                let mut distinct: Vec<f64> = (0..n).map(|i| matrix.values()[i * width + j]).collect();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                if distinct.len() > MAX_BINS {
                    return Column::Raw;
                }
                let codes = (0..n)
                    .map(|i| {
                        let v = matrix.values()[i * width + j];
                        distinct.partition_point(|&d| d < v) as u16
                    })
                    .collect();
                Column::Binned {
                    values: distinct,
                    codes,
                }
            })
            .collect();
        Self {
            matrix,
            columns,
            labels: matrix.labels().iter().map(|l| l.index() as u8).collect(),
        }
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.matrix.values()[row * self.matrix.width() + feature]
    }
}

fn impurity_total(criterion: Criterion, counts: &[f64; 3]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    match criterion {
        // n * (1 - sum p^2)
        Criterion::Gini => n - counts.iter().map(|c| c * c).sum::<f64>() / n,
        // n * H(p), in bits
        Criterion::Entropy => {
            counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|&c| -c * (c / n).log2())
                .sum()
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Builder<'v, 'a> {
    view: &'v TrainingView<'a>,
    params: TreeParams,
    rng: ChaCha8Rng,
    hist: Vec<[f64; 3]>,
    pairs: Vec<(f64, u8)>,
    // (value, class counts at that value) in ascending value order
    levels: Vec<(f64, [f64; 3])>,
}

impl Builder<'_, '_> {
    fn class_counts(&self, rows: &[usize]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for &r in rows {
            c[self.view.labels[r] as usize] += 1.0;
        }
        c
    }

    /// Best split on `feature` for this node, or `None` if it is constant.
    fn evaluate_feature(&mut self, feature: usize, rows: &[usize], parent: f64, counts: &[f64; 3]) -> Option<Candidate> {
        let n = rows.len() as f64;
        let mut levels = std::mem::take(&mut self.levels);
        levels.clear();
        match &self.view.columns[feature] {
            Column::Binned { values, codes } => {
                self.hist.clear();
                self.hist.resize(values.len(), [0.0; 3]);
                for &r in rows {
                    self.hist[codes[r] as usize][self.view.labels[r] as usize] += 1.0;
                }
                for (b, h) in self.hist.iter().enumerate() {
                    if h.iter().any(|&c| c > 0.0) {
                        levels.push((values[b], *h));
                    }
                }
            }
            Column::Raw => {
                self.pairs.clear();
                self.pairs
                    .extend(rows.iter().map(|&r| (self.view.value(r, feature), self.view.labels[r])));
                self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                for &(v, l) in &self.pairs {
                    match levels.last_mut() {
                        Some((lv, h)) if *lv == v => h[l as usize] += 1.0,
                        _ => {
                            let mut h = [0.0; 3];
                            h[l as usize] = 1.0;
                            levels.push((v, h));
                        }
                    }
                }
            }
        }
        let found = self.split_levels(feature, &levels, n, parent, counts);
        self.levels = levels;
        found
    }

    fn split_levels(
        &mut self,
        feature: usize,
        levels: &[(f64, [f64; 3])],
        n: f64,
        parent: f64,
        counts: &[f64; 3],
    ) -> Option<Candidate> {
        let crit = self.params.criterion;
        if levels.len() < 2 {
            return None;
        }

        let child_total = |left: &[f64; 3]| {
            let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
            impurity_total(crit, left) + impurity_total(crit, &right)
        };

        match self.params.splitter {
            Splitter::Best => {
                let mut left = [0.0; 3];
                let mut best: Option<Candidate> = None;
                for w in levels.windows(2) {
                    for c in 0..3 {
                        left[c] += w[0].1[c];
                    }
                    let decrease = (parent - child_total(&left)) / n;
                    if best.as_ref().map_or(true, |b| decrease > b.decrease) {
                        let mut threshold = 0.5 * (w[0].0 + w[1].0);
                        if threshold >= w[1].0 {
                            threshold = w[0].0;
                        }
                        best = Some(Candidate {
                            feature,
                            threshold,
                            decrease,
                        });
                    }
                }
                best
            }
            Splitter::Random => {
                let lo = levels[0].0;
                let hi = levels[levels.len() - 1].0;
                let threshold = self.rng.gen_range(lo..hi);
                let mut left = [0.0; 3];
                for (v, h) in levels {
                    if *v > threshold {
                        break;
                    }
                    for c in 0..3 {
                        left[c] += h[c];
                    }
                }
                Some(Candidate {
                    feature,
                    threshold,
                    decrease: (parent - child_total(&left)) / n,
                })
            }
        }
    }

    fn best_split(&mut self, rows: &[usize], counts: &[f64; 3]) -> Option<Candidate> {
        let width = self.view.matrix.width();
        let parent = impurity_total(self.params.criterion, counts);
        let features: Vec<usize> = match self.params.max_features {
            MaxFeatures::All => (0..width).collect(),
            mf => index::sample(&mut self.rng, width, mf.count(width)).into_vec(),
        };
        let mut best: Option<Candidate> = None;
        for f in features {
            if let Some(c) = self.evaluate_feature(f, rows, parent, counts) {
                if best.as_ref().map_or(true, |b| c.decrease > b.decrease) {
                    best = Some(c);
                }
            }
        }
        best.filter(|b| b.decrease > MIN_DECREASE)
    }

    fn build(mut self, mut rows: Vec<usize>) -> Vec<Node> {
        let mut nodes = vec![Node::Leaf { counts: [0; 3] }];
        // (node id, start, end, depth)
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        while let Some((id, start, end, depth)) = stack.pop() {
            let slice = &rows[start..end];
            let counts = self.class_counts(slice);
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let depth_ok = self.params.max_depth.map_or(true, |d| depth < d);
            let split = if !pure && depth_ok && slice.len() >= 2 {
                self.best_split(slice, &counts)
            } else {
                None
            };
            let Some(split) = split else {
                nodes[id] = Node::Leaf {
                    counts: counts.map(|c| c as u32),
                };
                continue;
            };
            let slice = &mut rows[start..end];
            let mut mid = 0;
            for i in 0..slice.len() {
                if self.view.value(slice[i], split.feature) <= split.threshold {
                    slice.swap(i, mid);
                    mid += 1;
                }
            }
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { counts: [0; 3] });
            nodes.push(Node::Leaf { counts: [0; 3] });
            nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, start + mid, end, depth + 1));
            stack.push((left, start, start + mid, depth + 1));
        }
        nodes
    }
}

pub(crate) fn fit_on_rows(view: &TrainingView<'_>, rows: Vec<usize>, params: TreeParams, rng: ChaCha8Rng) -> Result<TreeModel> {
    if rows.is_empty() {
        return Err(Error::Fit("no training rows".into()));
    }
    let builder = Builder {
        view,
        params,
        rng,
        hist: Vec::new(),
        pairs: Vec::new(),
        levels: Vec::new(),
    };
    Ok(TreeModel {
        params,
        width: view.matrix.width(),
        nodes: builder.build(rows),
    })
}

pub fn tree_fit(train: &FeatureMatrix, params: TreeParams, seed: u64) -> Result<TreeModel> {
    if train.n_rows() == 0 {
        return Err(Error::Fit("no training rows".into()));
    }
    if params.max_depth == Some(0) {
        return Err(Error::InvalidInput("max_depth must be positive".into()));
    }
    let view = TrainingView::new(train);
    fit_on_rows(&view, (0..train.n_rows()).collect(), params, seeds::rng(seed))
}

impl TreeModel {
    fn leaf_for(&self, x: &[f64]) -> Result<&[u32; 3]> {
        if x.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                actual: x.len(),
            });
        }
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return Ok(counts),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Class counts of the leaf `x` falls into.
    pub fn leaf_counts(&self, x: &[f64]) -> Result<[u32; 3]> {
        self.leaf_for(x).copied()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<RiskLabel> {
        Ok(majority(self.leaf_for(x)?))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32; 3]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts } => Some(counts),
            Node::Split { .. } => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RiskLabel::{High, Low, No};

    fn best(criterion: Criterion, depth: Option<usize>) -> TreeParams {
        TreeParams::new(criterion, Splitter::Best, depth)
    }

    fn accuracy(model: &TreeModel, m: &FeatureMatrix) -> f64 {
        let hits = m
            .rows()
            .zip(m.labels())
            .filter(|(r, l)| model.predict_row(r).unwrap() == **l)
            .count();
        hits as f64 / m.n_rows() as f64
    }

    #[test]
    fn pure_training_set_gives_single_leaf() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![3.0], vec![7.0]], &[Low; 3]).unwrap();
        let model = tree_fit(&m, best(Criterion::Gini, None), 0).unwrap();
        assert_eq!(model.depth(), 0);
        assert_eq!(model.predict_row(&[100.0]).unwrap(), Low);
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], &[No, High]).unwrap();
        for c in [Criterion::Gini, Criterion::Entropy] {
            let model = tree_fit(&m, best(c, None), 0).unwrap();
            match &model.nodes[0] {
                Node::Split { feature, threshold, .. } => {
                    assert_eq!(*feature, 0);
                    assert_eq!(*threshold, 0.5);
                }
                other => panic!("expected split, got {other:?}"),
            }
            assert_eq!(accuracy(&model, &m), 1.0);
        }
    }

    fn xor() -> FeatureMatrix {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        FeatureMatrix::from_rows(&rows, &[No, High, High, No]).unwrap()
    }

    #[test]
    fn depth_limit_blocks_xor() {
        // No single axis split decreases impurity on XOR, so growth stops at the root.
        let shallow = tree_fit(&xor(), best(Criterion::Gini, Some(1)), 0).unwrap();
        assert!(accuracy(&shallow, &xor()) < 1.0);
    }

    #[test]
    fn depth_two_separates_skewed_xor() {
        let rows = vec![
            vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0],
        ];
        let m = FeatureMatrix::from_rows(&rows, &[No, No, High, High, No]).unwrap();
        let one = tree_fit(&m, best(Criterion::Gini, Some(1)), 0).unwrap();
        assert!(accuracy(&one, &m) < 1.0);
        assert!(one.depth() <= 1);
        let two = tree_fit(&m, best(Criterion::Gini, Some(2)), 0).unwrap();
        assert_eq!(accuracy(&two, &m), 1.0);
    }

    #[test]
    fn leaves_hold_training_counts() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let labels: Vec<RiskLabel> = (0..40).map(|i| RiskLabel::ALL[(i * 5 % 11) % 3]).collect();
        let m = FeatureMatrix::from_rows(&rows, &labels).unwrap();
        for splitter in [Splitter::Best, Splitter::Random] {
            let model = tree_fit(&m, TreeParams::new(Criterion::Entropy, splitter, Some(3)), 9).unwrap();
            let total: u32 = model.leaves().map(|c| c.iter().sum::<u32>()).sum();
            assert_eq!(total, 40);
            assert!(model.depth() <= 3);
        }
    }

    #[test]
    fn raw_and_binned_paths_agree() {
        // 300 distinct values forces the sort path on feature 0; feature 1 is binned.
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![i as f64 * 0.37, (i % 4) as f64]).collect();
        let labels: Vec<RiskLabel> = (0..300).map(|i| if i < 120 { No } else if i % 4 == 0 { High } else { Low }).collect();
        let m = FeatureMatrix::from_rows(&rows, &labels).unwrap();
        let model = tree_fit(&m, best(Criterion::Gini, None), 0).unwrap();
        assert_eq!(accuracy(&model, &m), 1.0);
        match &model.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                // sort path must land on the midpoint between rows 119 and 120 or a
                // feature-1 split; either way it is a midpoint of present values
                if *feature == 0 {
                    assert!((threshold - 0.5 * (119.0 * 0.37 + 120.0 * 0.37)).abs() < 1e-9);
                }
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![((i * 7) % 13) as f64, ((i * 3) % 5) as f64]).collect();
        let labels: Vec<RiskLabel> = (0..60).map(|i| RiskLabel::ALL[(i * 7 % 13) % 3]).collect();
        let m = FeatureMatrix::from_rows(&rows, &labels).unwrap();
        let p = TreeParams::new(Criterion::Gini, Splitter::Random, None);
        assert_eq!(tree_fit(&m, p, 4).unwrap(), tree_fit(&m, p, 4).unwrap());
    }
}
