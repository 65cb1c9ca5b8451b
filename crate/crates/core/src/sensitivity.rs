//! Re-running a train/evaluate plan under different High-label thresholds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::ModelConfig;
use crate::dataset::{encode_cases, split_indices, CaseRecord, QuestionnaireSchema, RiskLabel, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{class_scores, confusion, police_protection};

/// What to train and how to split for each threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPlan {
    pub model: ModelConfig,
    #[serde(default)]
    pub split: SplitSpec,
    /// Master seed for model fitting.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub threshold: u32,
    pub police_protection: f64,
    pub f1_no: f64,
    pub f1_low: f64,
    pub f1_high: f64,
    pub weighted_f1: f64,
    /// Label counts over the whole corpus under this threshold.
    pub class_counts: [usize; 3],
}

/// One row per threshold, in input order. The split depends only on the
/// plan, so every threshold sees the same train and test cases.
pub fn threshold_sensitivity(
    records: &[CaseRecord],
    schema: &QuestionnaireSchema,
    thresholds: &[u32],
    plan: &EvalPlan,
) -> Result<Vec<SensitivityRow>> {
    if let Some(t) = thresholds.iter().find(|&&t| t < 2) {
        return Err(Error::InvalidInput(format!("high threshold must be >= 2, got {t}")));
    }
    let base = encode_cases(records, schema)?;
    let (train_idx, test_idx) = split_indices(base.n_rows(), &plan.split)?;
    let seed = plan.model.fit_seed(plan.seed);
    thresholds
        .par_iter()
        .map(|&threshold| {
            let m = base.relabel(threshold);
            let (train, test) = (m.select(&train_idx), m.select(&test_idx));
            let preds = plan.model.fit(&train, seed)?.predict(&test)?;
            let cm = confusion(&preds, test.labels())?;
            let s = class_scores(&cm)?;
            Ok(SensitivityRow {
                threshold,
                police_protection: police_protection(&cm)?,
                f1_no: s.class(RiskLabel::No).f1,
                f1_low: s.class(RiskLabel::Low).f1,
                f1_high: s.class(RiskLabel::High).f1,
                weighted_f1: s.weighted_f1,
                class_counts: m.class_counts(),
            })
        })
        .collect()
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "threshold",
        "police_protection",
        "f1_no",
        "f1_low",
        "f1_high",
        "weighted_f1",
        "n_no",
        "n_low",
        "n_high",
    ])?;
    for r in rows {
        w.write_record([
            r.threshold.to_string(),
            r.police_protection.to_string(),
            r.f1_no.to_string(),
            r.f1_low.to_string(),
            r.f1_high.to_string(),
            r.weighted_f1.to_string(),
            r.class_counts[0].to_string(),
            r.class_counts[1].to_string(),
            r.class_counts[2].to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
