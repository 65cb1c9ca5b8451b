//! Confusion matrices and quality measures.
//!
//! Besides per-class precision/recall/F1 this module provides the two
//! police-oriented measures: protection (precision on `No` plus F1 on `Low`
//! plus recall on `High`) and resource overload under a penalty `tau` for
//! escalating from `Low` to `High` surveillance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::RiskLabel;
use crate::error::{Error, Result};

/// 3x3 count table indexed `(predicted, true)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    pub fn get(&self, predicted: RiskLabel, truth: RiskLabel) -> u64 {
        self.counts[predicted.index()][truth.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn predicted_count(&self, label: RiskLabel) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    /// Support of `label` among the true labels.
    pub fn true_count(&self, label: RiskLabel) -> u64 {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }

    pub fn scaled(&self, k: u64) -> Self {
        let mut counts = self.counts;
        counts.iter_mut().flatten().for_each(|c| *c *= k);
        Self { counts }
    }
}

pub fn confusion(preds: &[RiskLabel], truths: &[RiskLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions but {} true labels",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truths) {
        cm.counts[p.index()][t.index()] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub per_class: [ClassScore; 3],
    /// F1 averaged with true-class support weights.
    pub weighted_f1: f64,
    /// Unweighted mean of the three F1 scores.
    pub macro_f1: f64,
}

impl ClassScores {
    pub fn class(&self, label: RiskLabel) -> &ClassScore {
        &self.per_class[label.index()]
    }
}

/// Per-class precision, recall and F1; any 0/0 counts as 0.
pub fn class_scores(cm: &ConfusionMatrix) -> Result<ClassScores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let mut per_class = [ClassScore::default(); 3];
    let mut weighted_f1 = 0.0;
    for label in RiskLabel::ALL {
        let hit = cm.get(label, label);
        let precision = ratio(hit, cm.predicted_count(label));
        let recall = ratio(hit, cm.true_count(label));
        let f1 = harmonic(precision, recall);
        per_class[label.index()] = ClassScore {
            precision,
            recall,
            f1,
        };
        weighted_f1 += cm.true_count(label) as f64 / total as f64 * f1;
    }
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / 3.0;
    Ok(ClassScores {
        per_class,
        weighted_f1,
        macro_f1,
    })
}

/// `Precision(No) + F1(Low) + Recall(High)`, in `[0, 3]`.
pub fn police_protection(cm: &ConfusionMatrix) -> Result<f64> {
    let s = class_scores(cm)?;
    Ok(s.class(RiskLabel::No).precision + s.class(RiskLabel::Low).f1 + s.class(RiskLabel::High).recall)
}

/// Weighted share of over-predictions, in `[0, 1/2]`.
///
/// `tau` is the extra cost of `High` over `Low` surveillance.
pub fn police_resource(cm: &ConfusionMatrix, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!("tau must be finite and >= 0, got {tau}")));
    }
    let m = cm.total();
    if m == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    use RiskLabel::{High, Low, No};
    let low_no = cm.get(Low, No) as f64;
    let high_low = cm.get(High, Low) as f64;
    let high_no = cm.get(High, No) as f64;
    Ok((low_no + tau * high_low + (1.0 + tau) * high_no) / (2.0 * m as f64 * (1.0 + tau)))
}

/// A named quality measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MetricId {
    HighF1,
    WeightedF1,
    MacroF1,
    PoliceProtection,
    PoliceResource { tau: f64 },
}

impl MetricId {
    pub fn evaluate(&self, cm: &ConfusionMatrix) -> Result<f64> {
        match *self {
            MetricId::HighF1 => Ok(class_scores(cm)?.class(RiskLabel::High).f1),
            MetricId::WeightedF1 => Ok(class_scores(cm)?.weighted_f1),
            MetricId::MacroF1 => Ok(class_scores(cm)?.macro_f1),
            MetricId::PoliceProtection => police_protection(cm),
            MetricId::PoliceResource { tau } => police_resource(cm, tau),
        }
    }

    pub fn score(&self, preds: &[RiskLabel], truths: &[RiskLabel]) -> Result<f64> {
        self.evaluate(&confusion(preds, truths)?)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricId::HighF1 => "high_f1",
            MetricId::WeightedF1 => "weighted_f1",
            MetricId::MacroF1 => "macro_f1",
            MetricId::PoliceProtection => "police_protection",
            MetricId::PoliceResource { .. } => "police_resource",
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            MetricId::PoliceResource { tau } => Some(tau),
            _ => None,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tau() {
            Some(tau) => write!(f, "{}({tau})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    /// Accepts `high_f1`, `weighted_f1`, `macro_f1`, `police_protection`
    /// and `police_resource(<tau>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s
            .strip_prefix("police_resource(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let tau: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad tau in '{s}'")))?;
            if !(tau >= 0.0) {
                return Err(Error::InvalidInput(format!("tau must be >= 0 in '{s}'")));
            }
            return Ok(MetricId::PoliceResource { tau });
        }
        match s {
            "high_f1" => Ok(MetricId::HighF1),
            "weighted_f1" => Ok(MetricId::WeightedF1),
            "macro_f1" => Ok(MetricId::MacroF1),
            "police_protection" => Ok(MetricId::PoliceProtection),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

/// One `(model id, metric, value)` row of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub metric: String,
    pub value: f64,
}

/// Every reported measure for one set of predictions.
pub fn metric_rows(model: &str, cm: &ConfusionMatrix, taus: &[f64]) -> Result<Vec<MetricRow>> {
    let s = class_scores(cm)?;
    let mut rows = Vec::new();
    let mut push = |metric: String, value: f64| {
        rows.push(MetricRow {
            model: model.to_string(),
            metric,
            value,
        })
    };
    for label in RiskLabel::ALL {
        let c = s.class(label);
        push(format!("precision_{label}"), c.precision);
        push(format!("recall_{label}"), c.recall);
        push(format!("f1_{label}"), c.f1);
    }
    push("weighted_f1".into(), s.weighted_f1);
    push("macro_f1".into(), s.macro_f1);
    push("police_protection".into(), police_protection(cm)?);
    for &tau in taus {
        push(format!("police_resource({tau})"), police_resource(cm, tau)?);
    }
    Ok(rows)
}
