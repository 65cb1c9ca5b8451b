//! Model selection: exhaustive grids, k-fold cross-validation and ranked
//! result tables.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineModel, ColumnScoring, RuleSystem};
use crate::classifiers::{knn_fit, Criterion, DistanceMetric, ModelConfig, Splitter, TrainedModel};
use crate::dataset::{kfold, FeatureMatrix, RiskLabel};
use crate::error::{Error, Result};
use crate::metrics::{class_scores, confusion, police_protection, ConfusionMatrix, MetricId};
use crate::seeds;

/// A grid value that may be the word `none`, e.g. an unbounded depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting<T>(pub Option<T>);

impl<T: Serialize> Serialize for Setting<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.0 {
            Some(v) => v.serialize(s),
            None => s.serialize_str("none"),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Setting<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Value(T),
            Word(String),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Value(v) => Ok(Setting(Some(v))),
            Raw::Word(w) if w.eq_ignore_ascii_case("none") => Ok(Setting(None)),
            Raw::Word(w) => Err(de::Error::custom(format!("expected a number or \"none\", got \"{w}\""))),
        }
    }
}

fn settings<T>(values: impl IntoIterator<Item = Option<T>>) -> Vec<Setting<T>> {
    values.into_iter().map(Setting).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeGrid {
    pub criterion: Vec<Criterion>,
    pub splitter: Vec<Splitter>,
    pub max_depth: Vec<Setting<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestGrid {
    pub criterion: Vec<Criterion>,
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Setting<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnGrid {
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NcGrid {
    pub metric: Vec<DistanceMetric>,
    pub shrink: Vec<Setting<f64>>,
}

/// Hyperparameter grids per model family; absent families are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<ForestGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nc: Option<NcGrid>,
}

const DEPTHS: [Option<usize>; 5] = [Some(5), Some(10), Some(50), Some(100), None];
const BOTH_CRITERIA: [Criterion; 2] = [Criterion::Entropy, Criterion::Gini];
const NC_METRICS: [DistanceMetric; 3] = [
    DistanceMetric::Euclidean,
    DistanceMetric::Minkowski { p: 2.0 },
    DistanceMetric::Manhattan,
];

impl SearchSpace {
    /// 20 tree, 50 forest, 7 KNN and 18 nearest-centroid configurations.
    pub fn default_grids() -> Self {
        Self {
            tree: Some(TreeGrid {
                criterion: BOTH_CRITERIA.to_vec(),
                splitter: vec![Splitter::Best, Splitter::Random],
                max_depth: settings(DEPTHS),
            }),
            forest: Some(ForestGrid {
                criterion: BOTH_CRITERIA.to_vec(),
                n_estimators: vec![1, 5, 10, 100, 500],
                max_depth: settings(DEPTHS),
            }),
            knn: Some(KnnGrid {
                k: vec![2, 5, 10, 20, 50, 100, 200],
            }),
            nc: Some(NcGrid {
                metric: NC_METRICS.to_vec(),
                shrink: settings([Some(0.1), Some(0.5), Some(1.0), Some(10.0), Some(20.0), None]),
            }),
        }
    }

    /// The finer nearest-centroid grid used for cross-validated tuning.
    pub fn nc_fine() -> Self {
        Self {
            nc: Some(NcGrid {
                metric: NC_METRICS.to_vec(),
                shrink: settings(
                    [0.1, 0.25, 0.5, 0.75, 1.0, 5.0, 10.0, 20.0]
                        .map(Some)
                        .into_iter()
                        .chain([None]),
                ),
            }),
            ..Self::default()
        }
    }

    /// Every configuration, family by family, each grid in list order.
    pub fn configs(&self) -> Result<Vec<ModelConfig>> {
        let mut out = Vec::new();
        let empty = |family: &str| Error::Config(format!("{family} grid has an empty value list"));
        if let Some(g) = &self.tree {
            if g.criterion.is_empty() || g.splitter.is_empty() || g.max_depth.is_empty() {
                return Err(empty("tree"));
            }
            for &criterion in &g.criterion {
                for &splitter in &g.splitter {
                    for d in &g.max_depth {
                        out.push(ModelConfig::Tree { criterion, splitter, max_depth: d.0 });
                    }
                }
            }
        }
        if let Some(g) = &self.forest {
            if g.criterion.is_empty() || g.n_estimators.is_empty() || g.max_depth.is_empty() {
                return Err(empty("forest"));
            }
            for &criterion in &g.criterion {
                for &n_estimators in &g.n_estimators {
                    for d in &g.max_depth {
                        out.push(ModelConfig::Forest { criterion, n_estimators, max_depth: d.0 });
                    }
                }
            }
        }
        if let Some(g) = &self.knn {
            if g.k.is_empty() {
                return Err(empty("knn"));
            }
            out.extend(g.k.iter().map(|&k| ModelConfig::Knn { k }));
        }
        if let Some(g) = &self.nc {
            if g.metric.is_empty() || g.shrink.is_empty() {
                return Err(empty("nc"));
            }
            for &metric in &g.metric {
                for s in &g.shrink {
                    out.push(ModelConfig::NearestCentroid { metric, shrink: s.0 });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("search space includes no model family".into()));
        }
        Ok(out)
    }
}

/// Whether larger values of `metric` are better.
pub fn higher_is_better(metric: MetricId) -> bool {
    !matches!(metric, MetricId::PoliceResource { .. })
}

/// One scored configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rank: usize,
    pub family: String,
    pub params: String,
    pub objective: Option<f64>,
    pub high_f1: Option<f64>,
    pub weighted_f1: Option<f64>,
    pub police_protection: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn scored(cfg_family: &str, params: String, objective: MetricId, cm: &ConfusionMatrix) -> Result<Self> {
        let s = class_scores(cm)?;
        Ok(Self {
            rank: 0,
            family: cfg_family.to_string(),
            params,
            objective: Some(objective.evaluate(cm)?),
            high_f1: Some(s.class(RiskLabel::High).f1),
            weighted_f1: Some(s.weighted_f1),
            police_protection: Some(police_protection(cm)?),
            error: None,
        })
    }

    fn failed(family: &str, params: String, error: &Error) -> Self {
        Self {
            rank: 0,
            family: family.to_string(),
            params,
            objective: None,
            high_f1: None,
            weighted_f1: None,
            police_protection: None,
            error: Some(error.to_string()),
        }
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.family, self.params)
    }
}

/// Rows sorted best first by the objective; failed rows last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub objective: MetricId,
    pub rows: Vec<ResultRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_fixed(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Left-aligned text columns separated by two spaces.
fn align(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn order(a: Option<f64>, b: Option<f64>, higher: bool) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a, b) {
        (Some(x), Some(y)) if higher => y.total_cmp(&x),
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

impl ResultTable {
    /// Sorts and assigns 1-based ranks; equal objectives fall back to the
    /// lexicographic `family:params` key.
    pub fn new(objective: MetricId, mut rows: Vec<ResultRow>) -> Self {
        let higher = higher_is_better(objective);
        rows.sort_by(|a, b| order(a.objective, b.objective, higher).then_with(|| a.key().cmp(&b.key())));
        for (i, r) in rows.iter_mut().enumerate() {
            r.rank = i + 1;
        }
        Self { objective, rows }
    }

    pub fn best(&self) -> Option<&ResultRow> {
        self.rows.first().filter(|r| r.objective.is_some())
    }

    /// Best row of one family.
    pub fn best_of(&self, family: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.family == family && r.objective.is_some())
    }

    fn cells(&self, full: bool) -> Vec<Vec<String>> {
        let f = if full { fmt_opt } else { fmt_fixed };
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.rank.to_string(),
                    r.family.clone(),
                    r.params.clone(),
                    f(r.objective),
                    f(r.high_f1),
                    f(r.weighted_f1),
                    f(r.police_protection),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        csv_string(
            &["rank", "family", "params", "objective", "high_f1", "weighted_f1", "police_protection", "error"],
            &self.cells(true),
        )
    }

    pub fn to_text(&self) -> String {
        align(
            &["rank", "family", "params", "objective", "high_f1", "weighted_f1", "police_protection", "error"],
            &self.cells(false),
        )
    }
}

fn score_predictions(cfg: &ModelConfig, preds: Result<Vec<RiskLabel>>, test: &FeatureMatrix, objective: MetricId) -> ResultRow {
    preds
        .and_then(|p| confusion(&p, test.labels()))
        .and_then(|cm| ResultRow::scored(cfg.family(), cfg.params_key(), objective, &cm))
        .unwrap_or_else(|e| ResultRow::failed(cfg.family(), cfg.params_key(), &e))
}

fn check_pair(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<()> {
    if train.width() != test.width() {
        return Err(Error::WidthMismatch {
            expected: train.width(),
            actual: test.width(),
        });
    }
    if test.n_rows() == 0 {
        return Err(Error::InvalidInput("test split is empty".into()));
    }
    Ok(())
}

/// Fits every grid point on `train` and scores it on `test`.
///
/// Configuration `c` is fitted with seed `c.fit_seed(master_seed)`. A
/// configuration that fails to fit becomes a row carrying the error. KNN
/// configurations share one neighbour search; their predictions are the
/// same as fitting each `K` separately.
pub fn grid_search(
    space: &SearchSpace,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    objective: MetricId,
    master_seed: u64,
) -> Result<ResultTable> {
    check_pair(train, test)?;
    let configs = space.configs()?;

    let knn_ks: Vec<usize> = configs
        .iter()
        .filter_map(|c| match c {
            ModelConfig::Knn { k } if *k >= 1 && *k <= train.n_rows() => Some(*k),
            _ => None,
        })
        .collect();
    let mut knn_preds: BTreeMap<usize, Vec<RiskLabel>> = BTreeMap::new();
    if let Some(&kmax) = knn_ks.iter().max() {
        let model = knn_fit(train, kmax)?;
        let per_row = (0..test.n_rows())
            .into_par_iter()
            .map(|i| model.predict_row_for_ks(test.row(i), &knn_ks))
            .collect::<Result<Vec<_>>>()?;
        for (j, &k) in knn_ks.iter().enumerate() {
            knn_preds.insert(k, per_row.iter().map(|r| r[j]).collect());
        }
    }

    let rows = configs
        .par_iter()
        .map(|cfg| {
            let preds = match cfg {
                ModelConfig::Knn { k } if knn_preds.contains_key(k) => Ok(knn_preds[k].clone()),
                _ => cfg.fit(train, cfg.fit_seed(master_seed)).and_then(|m| m.predict(test)),
            };
            score_predictions(cfg, preds, test, objective)
        })
        .collect();
    Ok(ResultTable::new(objective, rows))
}

/// Adds one row per rule system, scored on the same test split, and re-ranks.
pub fn compare_with_baseline(
    rule_systems: &[RuleSystem],
    table: &ResultTable,
    test: &FeatureMatrix,
    scoring: Option<&ColumnScoring>,
) -> Result<ResultTable> {
    let mut rows = table.rows.clone();
    for rule in rule_systems {
        let model = match scoring {
            Some(s) => BaselineModel::with_scoring(rule.clone(), s.clone()),
            None => BaselineModel::new(rule.clone()),
        };
        let preds = TrainedModel::Baseline(model).predict(test)?;
        let cm = confusion(&preds, test.labels())?;
        let cfg = ModelConfig::Baseline { rule: rule.clone() };
        rows.push(ResultRow::scored(cfg.family(), cfg.params_key(), table.objective, &cm)?);
    }
    Ok(ResultTable::new(table.objective, rows))
}

/// Per-fold scores of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub config: ModelConfig,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub folds: Vec<f64>,
}

/// Folds come from `kfold(n, k, master_seed)`, so every configuration sees
/// the same partition; fold `f` is fitted with seed
/// `derive(config.fit_seed(master_seed), [f])`.
pub fn cross_validate(
    config: &ModelConfig,
    train: &FeatureMatrix,
    k: usize,
    objective: MetricId,
    master_seed: u64,
) -> Result<CvResult> {
    let folds = kfold(train.n_rows(), k, master_seed)?;
    let base = config.fit_seed(master_seed);
    let values = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let tr = train.select(&fold.train);
            let va = train.select(&fold.validation);
            let model = config.fit(&tr, seeds::derive(base, &[f as u64]))?;
            objective.score(&model.predict(&va)?, va.labels())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = if values.iter().all(|v| *v == values[0]) {
        (values[0], 0.0)
    } else {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
    };
    Ok(CvResult {
        config: config.clone(),
        mean,
        std,
        folds: values,
    })
}

/// Ranked cross-validation results: Parameters, Mean, Std, Rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub objective: MetricId,
    pub k: usize,
    pub rows: Vec<CvResult>,
}

pub const DEFAULT_FOLDS: usize = 10;

/// Cross-validates every configuration of `space` and ranks by mean score,
/// ties broken by the configuration key.
pub fn cross_validate_space(
    space: &SearchSpace,
    train: &FeatureMatrix,
    k: usize,
    objective: MetricId,
    master_seed: u64,
) -> Result<CvTable> {
    let mut rows = space
        .configs()?
        .par_iter()
        .map(|c| cross_validate(c, train, k, objective, master_seed))
        .collect::<Result<Vec<_>>>()?;
    let higher = higher_is_better(objective);
    rows.sort_by(|a, b| {
        order(Some(a.mean), Some(b.mean), higher).then_with(|| a.config.key().cmp(&b.config.key()))
    });
    Ok(CvTable { objective, k, rows })
}

impl CvTable {
    pub fn best(&self) -> Option<&CvResult> {
        self.rows.first()
    }

    fn cells(&self, full: bool) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (m, s) = if full {
                    (r.mean.to_string(), r.std.to_string())
                } else {
                    (format!("{:.3}", r.mean), format!("{:.3}", r.std))
                };
                vec![r.config.key(), m, s, (i + 1).to_string()]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        csv_string(&["parameters", "mean", "std", "rank"], &self.cells(true))
    }

    pub fn to_text(&self) -> String {
        align(&["Parameters", "Mean", "Std", "Rank"], &self.cells(false))
    }

    /// Long format: one row per (configuration, fold).
    pub fn folds_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.folds
                    .iter()
                    .enumerate()
                    .map(move |(f, v)| vec![r.config.key(), f.to_string(), v.to_string()])
            })
            .collect();
        csv_string(&["parameters", "fold", "value"], &rows)
    }
}

impl fmt::Display for ResultTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
