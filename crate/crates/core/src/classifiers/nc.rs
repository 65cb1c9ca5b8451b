//! Nearest (shrunken) centroid classifier.
//!
//! Class centroids are plain means. With a shrink threshold `delta`, each
//! class offset from the overall centroid is standardized by
//! `m_k * (s_j + s0)`, soft-thresholded by `delta`, and mapped back. Features
//! whose standardized offsets all shrink to zero stop influencing the
//! decision, which makes the threshold a feature-selection dial.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, RiskLabel};
use crate::error::{Error, Result};

/// Serialized as `euclidean`, `manhattan`, `minkowski` (p = 2) or `minkowski(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
    Minkowski { p: f64 },
}

impl DistanceMetric {
    /// Minkowski with the default `p = 2`.
    pub fn minkowski() -> Self {
        DistanceMetric::Minkowski { p: 2.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Manhattan => "manhattan",
            DistanceMetric::Minkowski { .. } => "minkowski",
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            DistanceMetric::Minkowski { p } if !(p >= 1.0) || !p.is_finite() => Err(
                Error::InvalidInput(format!("minkowski p must be finite and >= 1, got {p}")),
            ),
            _ => Ok(()),
        }
    }

    /// A monotone transform of the distance (no final root), enough for argmin.
    pub fn reduced(&self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match *self {
            DistanceMetric::Euclidean | DistanceMetric::Minkowski { p: 2.0 } => {
                pairs.map(|(x, y)| (x - y) * (x - y)).sum()
            }
            DistanceMetric::Manhattan | DistanceMetric::Minkowski { p: 1.0 } => {
                pairs.map(|(x, y)| (x - y).abs()).sum()
            }
            DistanceMetric::Minkowski { p } => pairs.map(|(x, y)| (x - y).abs().powf(p)).sum(),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.reduced(a, b);
        match *self {
            DistanceMetric::Euclidean | DistanceMetric::Minkowski { p: 2.0 } => r.sqrt(),
            DistanceMetric::Manhattan | DistanceMetric::Minkowski { p: 1.0 } => r,
            DistanceMetric::Minkowski { p } => r.powf(1.0 / p),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistanceMetric::Minkowski { p } if p != 2.0 => write!(f, "minkowski({p})"),
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let metric = match s.as_str() {
            "euclidean" => DistanceMetric::Euclidean,
            "manhattan" => DistanceMetric::Manhattan,
            "minkowski" => DistanceMetric::minkowski(),
            other => {
                let p = other
                    .strip_prefix("minkowski(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|p| p.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown distance metric '{other}'")))?;
                DistanceMetric::Minkowski { p }
            }
        };
        metric.validate()?;
        Ok(metric)
    }
}

impl TryFrom<String> for DistanceMetric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistanceMetric> for String {
    fn from(m: DistanceMetric) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcModel {
    pub metric: DistanceMetric,
    pub shrink_threshold: Option<f64>,
    /// Classes seen at fit time, ascending; `centroids` is parallel to it.
    pub classes: Vec<RiskLabel>,
    pub class_sizes: Vec<usize>,
    /// Centroids used for prediction (shrunken when a threshold is set).
    pub centroids: Vec<Vec<f64>>,
    /// Unshrunken class means.
    pub class_means: Vec<Vec<f64>>,
    pub overall: Vec<f64>,
    /// Pooled within-class standard deviation per feature.
    pub within_sd: Vec<f64>,
    pub s0: f64,
    /// Standardized offsets `d_kj` before and after soft-thresholding.
    pub offsets: Option<Vec<Vec<f64>>>,
    pub shrunken_offsets: Option<Vec<Vec<f64>>>,
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn soft_threshold(d: f64, delta: f64) -> f64 {
    d.signum() * (d.abs() - delta).max(0.0)
}

/// Fits class centroids on the classes present in `train`.
///
/// Classes absent from `train` get no centroid and are never predicted.
pub fn nc_fit(
    train: &FeatureMatrix,
    metric: DistanceMetric,
    shrink_threshold: Option<f64>,
) -> Result<NcModel> {
    metric.validate()?;
    if let Some(delta) = shrink_threshold {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "shrink threshold must be finite and >= 0, got {delta}"
            )));
        }
    }
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Fit("no training rows".into()));
    }
    let width = train.width();
    let counts = train.class_counts();
    let classes: Vec<RiskLabel> = RiskLabel::ALL
        .into_iter()
        .filter(|l| counts[l.index()] > 0)
        .collect();
    let slot = |l: RiskLabel| classes.iter().position(|&c| c == l).expect("class present");

    let mut sums = vec![vec![0.0; width]; classes.len()];
    let mut overall = vec![0.0; width];
    for (row, &label) in train.rows().zip(train.labels()) {
        let acc = &mut sums[slot(label)];
        for j in 0..width {
            acc[j] += row[j];
            overall[j] += row[j];
        }
    }
    let class_sizes: Vec<usize> = classes.iter().map(|l| counts[l.index()]).collect();
    let class_means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&class_sizes)
        .map(|(s, &nk)| s.into_iter().map(|v| v / nk as f64).collect())
        .collect();
    overall.iter_mut().for_each(|v| *v /= n as f64);

    let k = classes.len();
    let mut within_sd = vec![0.0; width];
    if n > k {
        for (row, &label) in train.rows().zip(train.labels()) {
            let mean = &class_means[slot(label)];
            for j in 0..width {
                let d = row[j] - mean[j];
                within_sd[j] += d * d;
            }
        }
        within_sd
            .iter_mut()
            .for_each(|v| *v = (*v / (n - k) as f64).sqrt());
    }
    let max_sd = within_sd.iter().copied().fold(0.0, f64::max);
    let s0 = median(&within_sd).max(1e-6 * max_sd).max(1e-12);

    let (centroids, offsets, shrunken_offsets) = match shrink_threshold {
        None => (class_means.clone(), None, None),
        Some(delta) => {
            if n <= k {
                return Err(Error::Fit(format!(
                    "shrinkage needs more rows ({n}) than classes ({k})"
                )));
            }
            let mut centroids = Vec::with_capacity(k);
            let mut offsets = Vec::with_capacity(k);
            let mut shrunk = Vec::with_capacity(k);
            for (mean, &nk) in class_means.iter().zip(&class_sizes) {
                let mk = (1.0 / nk as f64 - 1.0 / n as f64).max(0.0).sqrt();
                let mut c = vec![0.0; width];
                let mut d = vec![0.0; width];
                let mut ds = vec![0.0; width];
                for j in 0..width {
                    let scale = mk * (within_sd[j] + s0);
                    d[j] = if scale > 0.0 { (mean[j] - overall[j]) / scale } else { 0.0 };
                    ds[j] = soft_threshold(d[j], delta);
                    c[j] = overall[j] + scale * ds[j];
                }
                centroids.push(c);
                offsets.push(d);
                shrunk.push(ds);
            }
            (centroids, Some(offsets), Some(shrunk))
        }
    };

    Ok(NcModel {
        metric,
        shrink_threshold,
        classes,
        class_sizes,
        centroids,
        class_means,
        overall,
        within_sd,
        s0,
        offsets,
        shrunken_offsets,
    })
}

impl NcModel {
    pub fn width(&self) -> usize {
        self.overall.len()
    }

    /// Nearest centroid; exact ties go to the higher-risk class.
    pub fn predict_row(&self, x: &[f64]) -> Result<RiskLabel> {
        if x.len() != self.width() {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                actual: x.len(),
            });
        }
        let mut best = (f64::INFINITY, RiskLabel::No);
        for (c, &label) in self.centroids.iter().zip(&self.classes) {
            let d = self.metric.reduced(x, c);
            // classes ascend, so `<=` lets later (riskier) classes win ties
            if d <= best.0 {
                best = (d, label);
            }
        }
        Ok(best.1)
    }

    /// Features with at least one nonzero shrunken offset; all features when
    /// no shrinkage was applied.
    pub fn selected_features(&self) -> Vec<usize> {
        match &self.shrunken_offsets {
            None => (0..self.width()).collect(),
            Some(ds) => (0..self.width())
                .filter(|&j| ds.iter().any(|d| d[j] != 0.0))
                .collect(),
        }
    }
}
