//! Questionnaire schema and its one-hot encoding into labeled matrices.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Default number of follow-up aggressions at which a case counts as `High`.
pub const DEFAULT_HIGH_THRESHOLD: u32 = 3;

/// Three-level recidivism risk, coded 0/1/2.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum RiskLabel {
    No = 0,
    Low = 1,
    High = 2,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 3] = [RiskLabel::No, RiskLabel::Low, RiskLabel::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> i8 {
        self as i8
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_code(code: i64) -> Option<Self> {
        usize::try_from(code).ok().and_then(Self::from_index)
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskLabel::No => "No",
            RiskLabel::Low => "Low",
            RiskLabel::High => "High",
        })
    }
}

impl FromStr for RiskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no" | "0" => Ok(RiskLabel::No),
            "low" | "1" => Ok(RiskLabel::Low),
            "high" | "2" => Ok(RiskLabel::High),
            other => Err(Error::InvalidInput(format!("unknown risk label '{other}'"))),
        }
    }
}

/// Maps a follow-up aggression count onto the risk scale.
///
/// `0` is `No`, `1..high_threshold` is `Low`, and anything at or above
/// `high_threshold` is `High`. Callers must pass `high_threshold >= 2`.
pub fn label_from_recidivism(count: u32, high_threshold: u32) -> RiskLabel {
    debug_assert!(high_threshold >= 2, "high_threshold must be at least 2");
    if count == 0 {
        RiskLabel::No
    } else if count < high_threshold {
        RiskLabel::Low
    } else {
        RiskLabel::High
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub options: Vec<String>,
    #[serde(default)]
    pub allows_missing: bool,
}

impl Question {
    pub fn block_width(&self) -> usize {
        self.options.len() + usize::from(self.allows_missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct QuestionnaireSchema {
    questions: Vec<Question>,
    offsets: Vec<usize>,
    width: usize,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    questions: Vec<Question>,
}

impl TryFrom<SchemaFile> for QuestionnaireSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        QuestionnaireSchema::new(file.questions)
    }
}

impl From<QuestionnaireSchema> for SchemaFile {
    fn from(schema: QuestionnaireSchema) -> Self {
        SchemaFile {
            questions: schema.questions,
        }
    }
}

impl QuestionnaireSchema {
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        if questions.is_empty() {
            return Err(Error::Schema("schema has no questions".into()));
        }
        let mut seen = HashSet::new();
        for q in &questions {
            if !seen.insert(q.id.as_str()) {
                return Err(Error::Schema(format!("duplicate question id '{}'", q.id)));
            }
            if q.options.len() < 2 {
                return Err(Error::Schema(format!(
                    "question '{}' needs at least 2 response options",
                    q.id
                )));
            }
            let mut opts = HashSet::new();
            if let Some(dup) = q.options.iter().find(|o| !opts.insert(o.as_str())) {
                return Err(Error::Schema(format!(
                    "question '{}' repeats option '{dup}'",
                    q.id
                )));
            }
            if q.options.iter().any(|o| o.is_empty()) {
                return Err(Error::Schema(format!(
                    "question '{}' has an empty option code",
                    q.id
                )));
            }
        }
        let mut offsets = Vec::with_capacity(questions.len());
        let mut width = 0;
        for q in &questions {
            offsets.push(width);
            width += q.block_width();
        }
        Ok(Self {
            questions,
            offsets,
            width,
        })
    }

    /// A 58-question layout whose one-hot encoding is 250 columns wide.
    ///
    /// 40 yes/no items admitting a missing answer (3 columns each), 14
    /// six-level items with missing (7 columns) and 4 seven-level items with
    /// missing (8 columns). The production questionnaire is not public; this
    /// is a reconstruction with the same width.
    pub fn default_layout() -> Self {
        let mut questions = Vec::with_capacity(58);
        let levels = |n: usize| (0..n).map(|i| format!("s{i}")).collect::<Vec<_>>();
        for i in 0..58 {
            let options = match i {
                0..=39 => vec!["no".to_string(), "yes".to_string()],
                40..=53 => levels(6),
                _ => levels(7),
            };
            questions.push(Question {
                id: format!("q{:02}", i + 1),
                options,
                allows_missing: true,
            });
        }
        Self::new(questions).expect("default layout is valid")
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    /// Encoded width: one column per option plus one per missing indicator.
    pub fn width(&self) -> usize {
        self.width
    }

    /// First encoded column of question `q`.
    pub fn offset(&self, q: usize) -> usize {
        self.offsets[q]
    }

    pub fn position(&self, question_id: &str) -> Option<usize> {
        self.questions.iter().position(|q| q.id == question_id)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&SchemaFile::from(self.clone())).expect("schema serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Raw questionnaire answers for one reported case.
///
/// A response of `None`, or a question absent from `responses`, is MISSING.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub responses: BTreeMap<String, Option<String>>,
    pub recidivism_count: u32,
    pub viogen_score: Option<u8>,
}

impl CaseRecord {
    pub fn response(&self, question_id: &str) -> Option<&str> {
        self.responses.get(question_id).and_then(|r| r.as_deref())
    }
}

/// Dense row-major numeric matrix with per-row labels and case metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    width: usize,
    values: Vec<f64>,
    labels: Vec<RiskLabel>,
    counts: Vec<u32>,
    case_ids: Vec<String>,
    viogen_scores: Vec<Option<u8>>,
}

impl FeatureMatrix {
    /// Builds a matrix from plain rows; counts are synthesized from labels.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[RiskLabel]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::InvalidInput(format!(
                "row {bad} has width {} (expected {width})",
                rows[bad].len()
            )));
        }
        let n = rows.len();
        Ok(Self {
            width,
            values: rows.concat(),
            labels: labels.to_vec(),
            counts: labels
                .iter()
                .map(|l| match l {
                    RiskLabel::No => 0,
                    RiskLabel::Low => 1,
                    RiskLabel::High => DEFAULT_HIGH_THRESHOLD,
                })
                .collect(),
            case_ids: (0..n).map(|i| format!("row-{i}")).collect(),
            viogen_scores: vec![None; n],
        })
    }

    pub fn with_viogen_scores(mut self, scores: Vec<Option<u8>>) -> Result<Self> {
        if scores.len() != self.n_rows() {
            return Err(Error::InvalidInput("viogen score count != row count".into()));
        }
        self.viogen_scores = scores;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[RiskLabel] {
        &self.labels
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn case_ids(&self) -> &[String] {
        &self.case_ids
    }

    pub fn viogen_scores(&self) -> &[Option<u8>] {
        &self.viogen_scores
    }

    /// Recomputes every label from the stored recidivism counts.
    pub fn relabel(&self, high_threshold: u32) -> Self {
        let mut out = self.clone();
        out.labels = self
            .counts
            .iter()
            .map(|&c| label_from_recidivism(c, high_threshold))
            .collect();
        out
    }

    /// Copies the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            width: self.width,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            counts: indices.iter().map(|&i| self.counts[i]).collect(),
            case_ids: indices.iter().map(|&i| self.case_ids[i].clone()).collect(),
            viogen_scores: indices.iter().map(|&i| self.viogen_scores[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for l in &self.labels {
            out[l.index()] += 1;
        }
        out
    }
}

/// One-hot encodes `records` against `schema`, labeling with the default threshold.
pub fn encode_cases(records: &[CaseRecord], schema: &QuestionnaireSchema) -> Result<FeatureMatrix> {
    encode_cases_with_threshold(records, schema, DEFAULT_HIGH_THRESHOLD)
}

pub fn encode_cases_with_threshold(
    records: &[CaseRecord],
    schema: &QuestionnaireSchema,
    high_threshold: u32,
) -> Result<FeatureMatrix> {
    if high_threshold < 2 {
        return Err(Error::InvalidInput(format!(
            "high threshold must be >= 2, got {high_threshold}"
        )));
    }
    let width = schema.width();
    let mut values = vec![0.0; records.len() * width];
    let known: HashSet<&str> = schema.questions().iter().map(|q| q.id.as_str()).collect();

    for (r, record) in records.iter().enumerate() {
        if let Some(unknown) = record.responses.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::Encoding {
                case_id: record.case_id.clone(),
                question: unknown.clone(),
                reason: "question not in schema".into(),
            });
        }
        let row = &mut values[r * width..(r + 1) * width];
        for (qi, q) in schema.questions().iter().enumerate() {
            let offset = schema.offset(qi);
            let col = match record.response(&q.id) {
                Some(code) => match q.options.iter().position(|o| o == code) {
                    Some(pos) => offset + pos,
                    None => {
                        return Err(Error::Encoding {
                            case_id: record.case_id.clone(),
                            question: q.id.clone(),
                            reason: format!("unknown option code '{code}'"),
                        })
                    }
                },
                None if q.allows_missing => offset + q.options.len(),
                None => {
                    return Err(Error::Encoding {
                        case_id: record.case_id.clone(),
                        question: q.id.clone(),
                        reason: "missing response not allowed".into(),
                    })
                }
            };
            row[col] = 1.0;
        }
    }

    Ok(FeatureMatrix {
        width,
        values,
        labels: records
            .iter()
            .map(|r| label_from_recidivism(r.recidivism_count, high_threshold))
            .collect(),
        counts: records.iter().map(|r| r.recidivism_count).collect(),
        case_ids: records.iter().map(|r| r.case_id.clone()).collect(),
        viogen_scores: records.iter().map(|r| r.viogen_score).collect(),
    })
}

/// Inverts the one-hot encoding of a row by taking the argmax of each block.
pub fn decode_row(
    schema: &QuestionnaireSchema,
    row: &[f64],
) -> Result<BTreeMap<String, Option<String>>> {
    if row.len() != schema.width() {
        return Err(Error::WidthMismatch {
            expected: schema.width(),
            actual: row.len(),
        });
    }
    let mut out = BTreeMap::new();
    for (qi, q) in schema.questions().iter().enumerate() {
        let block = &row[schema.offset(qi)..schema.offset(qi) + q.block_width()];
        let best = block
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let response = q.options.get(best).cloned();
        out.insert(q.id.clone(), response);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.67,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// Number of training rows: `train_fraction * n` rounded half up.
    pub fn train_size(&self, n: usize) -> usize {
        (self.train_fraction * n as f64 + 0.5).floor() as usize
    }
}

/// Seeded shuffle of row indices into (train, test).
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("cannot split {n} rows (need >= 2)")));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n_train = spec.train_size(n);
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidInput(format!(
            "train fraction {} leaves an empty part for {n} rows",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::rng(spec.seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split(matrix: &FeatureMatrix, spec: &SplitSpec) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (train, test) = split_indices(matrix.n_rows(), spec)?;
    Ok((matrix.select(&train), matrix.select(&test)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Shuffled k-fold partition; validation sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "k-fold needs 2 <= k <= n (k = {k}, n = {n})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        bounds.push(bounds[f] + base + usize::from(f < extra));
    }
    Ok((0..k)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            Fold {
                validation: idx[lo..hi].to_vec(),
                train: idx[..lo].iter().chain(&idx[hi..]).copied().collect(),
            }
        })
        .collect())
}

pub fn kfold_matrices(
    matrix: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<Vec<(FeatureMatrix, FeatureMatrix)>> {
    Ok(kfold(matrix.n_rows(), k, seed)?
        .into_iter()
        .map(|f| (matrix.select(&f.train), matrix.select(&f.validation)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(id: &str, options: &[&str], allows_missing: bool) -> Question {
        Question {
            id: id.into(),
            options: options.iter().map(|s| s.to_string()).collect(),
            allows_missing,
        }
    }

    fn record(id: &str, responses: &[(&str, Option<&str>)], count: u32) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            responses: responses
                .iter()
                .map(|(k, v)| (k.to_string(), v.map(str::to_string)))
                .collect(),
            recidivism_count: count,
            viogen_score: None,
        }
    }

    #[test]
    fn one_hot_identity() {
        let schema = QuestionnaireSchema::new(vec![q("a", &["A", "B"], false)]).unwrap();
        let m = encode_cases(&[record("c1", &[("a", Some("A"))], 0)], &schema).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn missing_gets_its_own_column() {
        let schema = QuestionnaireSchema::new(vec![q("a", &["A", "B"], true)]).unwrap();
        let m = encode_cases(&[record("c1", &[("a", None)], 0)], &schema).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0, 1.0]);
        // absent key is also MISSING
        let m = encode_cases(&[record("c2", &[], 0)], &schema).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn default_layout_is_58_by_250() {
        let schema = QuestionnaireSchema::default_layout();
        assert_eq!(schema.questions().len(), 58);
        assert_eq!(schema.width(), 250);
        let responses: Vec<(String, Option<String>)> = schema
            .questions()
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let r = if i % 5 == 0 { None } else { Some(q.options[i % q.options.len()].clone()) };
                (q.id.clone(), r)
            })
            .collect();
        let rec = CaseRecord {
            case_id: "x".into(),
            responses: responses.into_iter().collect(),
            recidivism_count: 1,
            viogen_score: None,
        };
        let m = encode_cases(&[rec], &schema).unwrap();
        assert_eq!(m.width(), 250);
        assert_eq!(m.row(0).iter().sum::<f64>(), 58.0);
    }

    #[test]
    fn encoding_errors_name_case_and_question() {
        let schema = QuestionnaireSchema::new(vec![q("a", &["A", "B"], false)]).unwrap();
        let err = encode_cases(&[record("c9", &[("a", Some("Z"))], 0)], &schema).unwrap_err();
        assert!(matches!(err, Error::Encoding { ref case_id, ref question, .. } if case_id == "c9" && question == "a"));
        let err = encode_cases(&[record("c9", &[("zz", Some("A"))], 0)], &schema).unwrap_err();
        assert!(matches!(err, Error::Encoding { ref question, .. } if question == "zz"));
        let err = encode_cases(&[record("c9", &[("a", None)], 0)], &schema).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn schema_validation() {
        assert!(QuestionnaireSchema::new(vec![q("a", &["A"], false)]).is_err());
        assert!(QuestionnaireSchema::new(vec![q("a", &["A", "B"], false), q("a", &["A", "B"], true)]).is_err());
        assert!(QuestionnaireSchema::new(vec![]).is_err());
    }

    #[test]
    fn schema_toml_round_trip() {
        let schema = QuestionnaireSchema::default_layout();
        let back = QuestionnaireSchema::from_toml(&schema.to_toml()).unwrap();
        assert_eq!(schema, back);
    }

    #[test]
    fn labels_follow_threshold() {
        assert_eq!(label_from_recidivism(0, 3), RiskLabel::No);
        assert_eq!(label_from_recidivism(1, 3), RiskLabel::Low);
        assert_eq!(label_from_recidivism(2, 3), RiskLabel::Low);
        assert_eq!(label_from_recidivism(3, 3), RiskLabel::High);
        assert_eq!(label_from_recidivism(2, 2), RiskLabel::High);
    }

    fn matrix_of(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        FeatureMatrix::from_rows(&rows, &vec![RiskLabel::No; n]).unwrap()
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec { train_fraction: 0.67, seed: 11 };
        let (tr, te) = split(&matrix_of(100), &spec).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (67, 33));

        let spec = SplitSpec { train_fraction: 0.5, seed: 11 };
        let (tr, te) = split(&matrix_of(2), &spec).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (1, 1));

        assert!(split(&matrix_of(1), &spec).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let spec = SplitSpec { train_fraction: 0.67, seed: 5 };
        assert_eq!(split_indices(50, &spec).unwrap(), split_indices(50, &spec).unwrap());
        let other = SplitSpec { seed: 6, ..spec };
        assert_ne!(split_indices(50, &spec).unwrap(), split_indices(50, &other).unwrap());
    }

    #[test]
    fn kfold_leave_one_out() {
        let folds = kfold(10, 10, 1).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.validation.len() == 1 && f.train.len() == 9));
    }

    #[test]
    fn kfold_uneven_sizes() {
        // 103 = 10 * 10 + 3
        let mut sizes: Vec<usize> = kfold(103, 10, 4).unwrap().iter().map(|f| f.validation.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [10, 10, 10, 10, 10, 10, 10, 11, 11, 11]);
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(kfold(5, 1, 0).is_err());
        assert!(kfold(5, 6, 0).is_err());
    }

    proptest! {
        #[test]
        fn kfold_is_a_partition(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold(n, k, seed).unwrap();
            let mut seen = vec![0u32; n];
            for f in &folds {
                for &i in &f.validation { seen[i] += 1; }
                let mut all: Vec<usize> = f.train.iter().chain(&f.validation).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(folds, kfold(n, k, seed).unwrap());
        }

        #[test]
        fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let spec = SplitSpec { train_fraction: frac, seed };
            if let Ok((tr, te)) = split_indices(n, &spec) {
                prop_assert_eq!(tr.len(), spec.train_size(n));
                let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn labels_are_monotone(a in 0u32..50, b in 0u32..50, t in 2u32..10) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(label_from_recidivism(lo, t) <= label_from_recidivism(hi, t));
        }

        #[test]
        fn encode_decode_round_trip(choices in prop::collection::vec(0usize..8, 58)) {
            let schema = QuestionnaireSchema::default_layout();
            let responses: BTreeMap<String, Option<String>> = schema
                .questions()
                .iter()
                .zip(&choices)
                .map(|(q, &c)| {
                    let r = q.options.get(c % q.block_width()).cloned();
                    (q.id.clone(), r)
                })
                .collect();
            let rec = CaseRecord { case_id: "p".into(), responses: responses.clone(), recidivism_count: 0, viogen_score: None };
            let m = encode_cases(&[rec], &schema).unwrap();
            for (qi, qq) in schema.questions().iter().enumerate() {
                let block = &m.row(0)[schema.offset(qi)..schema.offset(qi) + qq.block_width()];
                prop_assert_eq!(block.iter().sum::<f64>(), 1.0);
            }
            prop_assert_eq!(decode_row(&schema, m.row(0)).unwrap(), responses);
        }
    }
}
