//! Run configuration: a TOML file with one section per command, plus
//! `--seed` and `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ipvrisk_core::baseline::RuleSystem;
use ipvrisk_core::classifiers::{DistanceMetric, ModelConfig};
use ipvrisk_core::dataset::{SplitSpec, DEFAULT_HIGH_THRESHOLD};
use ipvrisk_core::experiments::SearchSpace;
use ipvrisk_core::hybrid::{Smoothing, DEFAULT_GRID_SIZE, DEFAULT_PROFILE_RUNS, DEFAULT_SWEEP_RUNS};
use ipvrisk_core::metrics::MetricId;
use ipvrisk_core::synthgen::GeneratorSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for model fitting and Monte Carlo runs.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "GeneratorSpec::demo")]
    pub generate: GeneratorSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub gridsearch: GridsearchConfig,
    #[serde(default)]
    pub crossval: CrossvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub decide: DecideConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config takes every default")
    }
}

/// Where the cases come from and how they are labeled and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Case table; defaults to `cases.csv` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<PathBuf>,
    /// Questionnaire schema; the built-in layout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Assessment weights, used when cases carry no stored score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub high_threshold: u32,
    #[serde(default)]
    pub split: SplitSpec,
}

fn default_threshold() -> u32 {
    DEFAULT_HIGH_THRESHOLD
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            cases: None,
            schema: None,
            scoring: None,
            high_threshold: DEFAULT_HIGH_THRESHOLD,
            split: SplitSpec::default(),
        }
    }
}

/// A model given inline or by preset name.
///
/// Presets: `nc-shrink-0.1` and `nc-shrink-5` (euclidean nearest
/// centroids), plus any rule-system name such as `cautious`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Config(ModelConfig),
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<ModelConfig> {
        let nc = |shrink| ModelConfig::NearestCentroid {
            metric: DistanceMetric::Euclidean,
            shrink: Some(shrink),
        };
        match self {
            ModelSpec::Config(c) => Ok(c.clone()),
            ModelSpec::Preset(name) => match name.as_str() {
                "nc-shrink-0.1" => Ok(nc(0.1)),
                "nc-shrink-5" => Ok(nc(5.0)),
                other => RuleSystem::by_name(other)
                    .map(|rule| ModelConfig::Baseline { rule })
                    .ok_or_else(|| anyhow!("invalid config: unknown model preset '{other}'")),
            },
        }
    }
}

fn default_model() -> ModelSpec {
    ModelSpec::Preset("nc-shrink-0.1".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { model: default_model() }
    }
}

fn default_taus() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 5.0]
}

fn default_objective() -> String {
    "police_protection".into()
}

fn all_rules() -> Vec<String> {
    RuleSystem::named().iter().map(|r| r.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Saved model; defaults to `model.json` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    /// Rule systems reported next to the model.
    #[serde(default)]
    pub rules: Vec<String>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            model: None,
            taus: default_taus(),
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsearchConfig {
    #[serde(default = "default_objective")]
    pub objective: String,
    #[serde(default = "SearchSpace::default_grids")]
    pub space: SearchSpace,
    /// Rule systems appended to the table on the same test split.
    #[serde(default = "all_rules")]
    pub rules: Vec<String>,
}

impl Default for GridsearchConfig {
    fn default() -> Self {
        Self {
            objective: default_objective(),
            space: SearchSpace::default_grids(),
            rules: all_rules(),
        }
    }
}

fn default_folds() -> usize {
    ipvrisk_core::experiments::DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalConfig {
    #[serde(default = "default_objective")]
    pub objective: String,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "SearchSpace::nc_fine")]
    pub space: SearchSpace,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            objective: default_objective(),
            folds: default_folds(),
            space: SearchSpace::nc_fine(),
        }
    }
}

fn default_rule() -> String {
    "cautious".into()
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_sweep_runs() -> usize {
    DEFAULT_SWEEP_RUNS
}

fn default_profile_runs() -> usize {
    DEFAULT_PROFILE_RUNS
}

fn default_profile_mu() -> Vec<f64> {
    vec![0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// The rule system behind f0.
    #[serde(default = "default_rule")]
    pub rule: String,
    /// The learned model behind f1. When absent, the best configuration of
    /// the `crossval` section is chosen by cross-validation on the training
    /// split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_sweep_runs")]
    pub n_runs: usize,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_profile_mu")]
    pub profile_mu: Vec<f64>,
    #[serde(default = "default_profile_runs")]
    pub profile_runs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rule: default_rule(),
            model: None,
            grid_size: DEFAULT_GRID_SIZE,
            n_runs: DEFAULT_SWEEP_RUNS,
            taus: default_taus(),
            profile_mu: default_profile_mu(),
            profile_runs: DEFAULT_PROFILE_RUNS,
        }
    }
}

fn default_tau() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideConfig {
    /// Resource budget r0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub smoothing: Smoothing,
    /// Resource curve; defaults to the matching `sweep` output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
}

impl Default for DecideConfig {
    fn default() -> Self {
        Self {
            r0: None,
            tau: default_tau(),
            smoothing: Smoothing::None,
            curve: None,
        }
    }
}

fn default_thresholds() -> Vec<u32> {
    vec![2, 3, 4, 5, 6]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<u32>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            thresholds: default_thresholds(),
        }
    }
}

pub fn parse_objective(text: &str) -> Result<MetricId> {
    text.parse().map_err(|e| anyhow!("invalid config: objective: {e}"))
}

pub fn parse_rule(text: &str) -> Result<RuleSystem> {
    text.parse().map_err(|e| anyhow!("invalid config: rule system '{text}': {e}"))
}

/// Sets `path` (dotted keys) to `value` inside `table`. The value is read
/// as a TOML value, falling back to a plain string.
fn set_path(table: &mut toml::Table, path: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("invalid config: override '{path}': '{k}' is not a table"))?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

fn parse_table(table: toml::Table) -> Result<RunConfig> {
    table
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", one_line(&e.to_string())))
}

/// Reads the optional config file, fills defaults, then applies overrides
/// on top of the resolved values.
pub fn load(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<RunConfig> {
    let table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| anyhow!("invalid config {}: {}", p.display(), one_line(&e.to_string())))?
        }
        None => toml::Table::new(),
    };
    let mut cfg = parse_table(table)?;
    if !overrides.is_empty() {
        let mut table = toml::Table::try_from(&cfg).map_err(|e| anyhow!("invalid config: {e}"))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("invalid config: override '{o}' is not key=value"))?;
            set_path(&mut table, k.trim(), v.trim())?;
        }
        cfg = parse_table(table)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.generate.seed = s;
    }
    if cfg.seed > i64::MAX as u64 {
        bail!("invalid config: seed must fit in a signed 64-bit integer");
    }
    Ok(cfg)
}

/// Collapses a multi-line parser message into one line.
pub fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
