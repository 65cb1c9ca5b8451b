use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, RiskLabel};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct KnnData {
    k: usize,
    width: usize,
    values: Vec<f64>,
    labels: Vec<RiskLabel>,
}

/// K-nearest-neighbour majority vote under the Euclidean metric.
///
/// Training rows are kept in full. A per-column list of the nonzero training
/// entries makes distance evaluation cost proportional to the overlap between
/// the query and the data, which is small for one-hot rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnnData", into = "KnnData")]
pub struct KnnModel {
    k: usize,
    width: usize,
    values: Vec<f64>,
    labels: Vec<RiskLabel>,
    norms: Vec<f64>,
    postings: Vec<Vec<(u32, f64)>>,
}

impl TryFrom<KnnData> for KnnModel {
    type Error = Error;

    fn try_from(d: KnnData) -> Result<Self> {
        if d.width == 0 || d.values.len() != d.width * d.labels.len() {
            return Err(Error::InvalidInput("inconsistent stored KNN data".into()));
        }
        Self::build(d.k, d.width, d.values, d.labels)
    }
}

impl From<KnnModel> for KnnData {
    fn from(m: KnnModel) -> Self {
        KnnData {
            k: m.k,
            width: m.width,
            values: m.values,
            labels: m.labels,
        }
    }
}

pub fn knn_fit(train: &FeatureMatrix, k: usize) -> Result<KnnModel> {
    KnnModel::build(k, train.width(), train.values().to_vec(), train.labels().to_vec())
}

impl KnnModel {
    fn build(k: usize, width: usize, values: Vec<f64>, labels: Vec<RiskLabel>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("K must be positive".into()));
        }
        if k > labels.len() {
            return Err(Error::Fit(format!(
                "K = {k} exceeds the {} training rows",
                labels.len()
            )));
        }
        let rows = values.chunks_exact(width.max(1));
        let norms = rows.clone().map(|r| r.iter().map(|v| v * v).sum()).collect();
        let mut postings = vec![Vec::new(); width];
        for (i, r) in rows.enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    postings[j].push((i as u32, v));
                }
            }
        }
        Ok(Self {
            k,
            width,
            values,
            labels,
            norms,
            postings,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances resolve to the lower row index.
    pub fn neighbours(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.nearest(x, self.k)
    }

    fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<usize>> {
        if x.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                actual: x.len(),
            });
        }
        let qn: f64 = x.iter().map(|v| v * v).sum();
        let mut dot = vec![0.0; self.labels.len()];
        for (j, &q) in x.iter().enumerate() {
            if q != 0.0 {
                for &(i, v) in &self.postings[j] {
                    dot[i as usize] += q * v;
                }
            }
        }
        let mut dist: Vec<(f64, usize)> = dot
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (d, tn))| ((qn + tn - 2.0 * d).max(0.0), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }

    /// Majority label among the neighbours; vote ties go to higher risk.
    pub fn predict_row(&self, x: &[f64]) -> Result<RiskLabel> {
        let mut votes = [0usize; 3];
        for i in self.neighbours(x)? {
            votes[self.labels[i].index()] += 1;
        }
        Ok(majority(&votes))
    }

    /// Predictions for several neighbourhood sizes from one neighbour
    /// search. Each entry equals what a model fitted with that `K` predicts.
    /// Every `K` must lie in `1..=self.k()`.
    pub fn predict_row_for_ks(&self, x: &[f64], ks: &[usize]) -> Result<Vec<RiskLabel>> {
        if let Some(bad) = ks.iter().find(|&&k| k == 0 || k > self.k) {
            return Err(Error::InvalidInput(format!("K = {bad} outside 1..={}", self.k)));
        }
        let order = self.neighbours(x)?;
        let mut votes = vec![[0usize; 3]];
        for &i in &order {
            let mut next = *votes.last().unwrap();
            next[self.labels[i].index()] += 1;
            votes.push(next);
        }
        Ok(ks.iter().map(|&k| majority(&votes[k])).collect())
    }
}

/// Label with the most votes, ties toward the higher-risk label.
pub(crate) fn majority<T: PartialOrd + Copy>(votes: &[T; 3]) -> RiskLabel {
    let mut best = 0;
    for i in 1..3 {
        if votes[i] >= votes[best] {
            best = i;
        }
    }
    RiskLabel::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use RiskLabel::{High, Low, No};

    fn fixture() -> FeatureMatrix {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0], vec![5.0, 5.0], vec![6.0, 5.0]];
        FeatureMatrix::from_rows(&rows, &[No, Low, Low, High, No]).unwrap()
    }

    #[test]
    fn exact_match_with_k1() {
        let m = fixture();
        let model = knn_fit(&m, 1).unwrap();
        for (row, label) in m.rows().zip(m.labels()) {
            assert_eq!(model.predict_row(row).unwrap(), *label);
        }
    }

    #[test]
    fn k_equal_n_is_global_majority() {
        let m = fixture();
        let model = knn_fit(&m, 5).unwrap();
        // 2 No, 2 Low, 1 High: tie between No and Low goes to Low
        for x in [[0.0, 0.0], [100.0, 100.0], [5.0, 5.0]] {
            assert_eq!(model.predict_row(&x).unwrap(), Low);
        }
    }

    #[test]
    fn two_way_vote_tie_goes_high() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], &[No, High]).unwrap();
        let model = knn_fit(&m, 2).unwrap();
        assert_eq!(model.predict_row(&[0.1]).unwrap(), High);
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0]], &[Low, High, No]).unwrap();
        let model = knn_fit(&m, 1).unwrap();
        assert_eq!(model.neighbours(&[0.0]).unwrap(), vec![0]);
        assert_eq!(model.predict_row(&[0.0]).unwrap(), Low);
    }

    #[test]
    fn k_larger_than_train_is_an_error() {
        assert!(knn_fit(&fixture(), 6).is_err());
        assert!(knn_fit(&fixture(), 0).is_err());
    }

    #[test]
    fn multi_k_matches_single_k_models() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64, 0.0, (i / 9) as f64]).collect();
        let labels: Vec<RiskLabel> = (0..40).map(|i| RiskLabel::ALL[(i * 7 / 5) % 3]).collect();
        let m = FeatureMatrix::from_rows(&rows, &labels).unwrap();
        let ks = [1, 2, 5, 10, 40];
        let wide = knn_fit(&m, 40).unwrap();
        for x in [[0.0, 1.0, 0.0, 2.0], [3.5, 0.0, 1.0, 0.0], [6.0, 2.0, 0.0, 4.0]] {
            let multi = wide.predict_row_for_ks(&x, &ks).unwrap();
            for (k, got) in ks.iter().zip(multi) {
                assert_eq!(got, knn_fit(&m, *k).unwrap().predict_row(&x).unwrap(), "K = {k}");
            }
        }
        assert!(knn_fit(&m, 5).unwrap().predict_row_for_ks(&[0.0; 4], &[6]).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let model = knn_fit(&fixture(), 3).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: KnnModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }
}
