//! One function per subcommand. Each reads its inputs, writes its outputs
//! under the output directory and finishes with a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ipvrisk_core::baseline::{ColumnScoring, RuleSystem, ViogenScoring};
use ipvrisk_core::classifiers::{ModelConfig, TrainedModel};
use ipvrisk_core::dataset::{encode_cases_with_threshold, split, CaseRecord, FeatureMatrix, QuestionnaireSchema};
use ipvrisk_core::experiments::{compare_with_baseline, cross_validate_space, grid_search};
use ipvrisk_core::hybrid::{decide_mu_with, mu_sweep, resource_profile, resource_profile_csv, Smoothing, SweepResult};
use ipvrisk_core::io::{cases_to_csv, read_cases, read_schema, read_text, write_text, Manifest};
use ipvrisk_core::metrics::{confusion, metric_rows, MetricId};
use ipvrisk_core::seeds;
use ipvrisk_core::sensitivity::{sensitivity_csv, threshold_sensitivity, EvalPlan};
use ipvrisk_core::RiskLabel;
use serde::{Deserialize, Serialize};

use crate::config::{parse_objective, parse_rule, RunConfig};

/// Output sink for one command run.
pub struct Run {
    pub cfg: RunConfig,
    out_dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    pub fn new(command: &str, cfg: RunConfig, out_dir: &Path, config_file: Option<&Path>) -> Result<Self> {
        let table = toml::Table::try_from(&cfg).map_err(|e| anyhow!("invalid config: {e}"))?;
        let mut manifest = Manifest::new(command, cfg.seed, table);
        if let Some(p) = config_file {
            manifest.add_input(p)?;
        }
        Ok(Self {
            cfg,
            out_dir: out_dir.to_path_buf(),
            manifest,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.add_input(path)?;
        Ok(())
    }

    /// Writes a text output whose first line is `# manifest: ...`.
    fn emit(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# {}\n{body}", self.manifest.header());
        write_text(&self.out(name), &text)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn emit_raw(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.out(name), text)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest itself.
    pub fn finish(self) -> Result<()> {
        let path = self.out(&self.manifest.file_name());
        write_text(&path, &self.manifest.to_toml()?)?;
        Ok(())
    }

    fn schema(&mut self) -> Result<QuestionnaireSchema> {
        match self.cfg.data.schema.clone() {
            Some(p) => {
                let s = read_schema(&p)?;
                self.input(&p)?;
                Ok(s)
            }
            None => Ok(QuestionnaireSchema::default_layout()),
        }
    }

    fn records(&mut self) -> Result<Vec<CaseRecord>> {
        let path = self.cfg.data.cases.clone().unwrap_or_else(|| self.out("cases.csv"));
        let records = read_cases(&path)?;
        self.input(&path)?;
        if records.is_empty() {
            bail!("{}: no cases", path.display());
        }
        Ok(records)
    }

    fn column_scoring(&mut self, schema: &QuestionnaireSchema) -> Result<Option<ColumnScoring>> {
        let Some(p) = self.cfg.data.scoring.clone() else {
            return Ok(None);
        };
        let scoring = ViogenScoring::from_toml(&read_text(&p)?).with_context(|| p.display().to_string())?;
        self.input(&p)?;
        Ok(Some(ColumnScoring::from_scoring(&scoring, schema)?))
    }

    /// Encoded cases split into training and test parts.
    fn data(&mut self) -> Result<Data> {
        let schema = self.schema()?;
        let records = self.records()?;
        let scoring = self.column_scoring(&schema)?;
        let matrix = encode_cases_with_threshold(&records, &schema, self.cfg.data.high_threshold)?;
        let (train, test) = split(&matrix, &self.cfg.data.split)?;
        Ok(Data {
            train,
            test,
            scoring,
        })
    }
}

struct Data {
    train: FeatureMatrix,
    test: FeatureMatrix,
    scoring: Option<ColumnScoring>,
}

/// Saved model file: the configuration next to the fitted state.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub manifest: String,
    pub config: ModelConfig,
    pub model: TrainedModel,
}

fn fit(cfg: &ModelConfig, data: &Data, seed: u64) -> Result<TrainedModel> {
    let mut model = cfg.fit(&data.train, cfg.fit_seed(seed))?;
    if let (TrainedModel::Baseline(b), Some(s)) = (&mut model, &data.scoring) {
        b.scoring.get_or_insert_with(|| s.clone());
    }
    Ok(model)
}

fn rule_predictions(rule: &RuleSystem, data: &Data) -> Result<Vec<RiskLabel>> {
    let cfg = ModelConfig::Baseline { rule: rule.clone() };
    Ok(fit(&cfg, data, 0)?.predict(&data.test)?)
}

fn rules(names: &[String]) -> Result<Vec<RuleSystem>> {
    names.iter().map(|n| parse_rule(n)).collect()
}

pub fn generate(run: &mut Run) -> Result<String> {
    let schema = run.schema()?;
    let corpus = run.cfg.generate.build(&schema)?;
    let header = run.manifest.header();
    run.emit_raw("cases.csv", &cases_to_csv(&corpus.records, &schema, Some(&header))?)?;
    run.emit("schema.toml", &schema.to_toml())?;
    let mut profiles = String::from("case_id,profile\n");
    for (r, p) in corpus.records.iter().zip(&corpus.profiles) {
        writeln!(profiles, "{},{p}", r.case_id)?;
    }
    run.emit("profiles.csv", &profiles)?;
    if let Some(s) = &corpus.scoring {
        run.emit("scoring.toml", &s.to_toml())?;
    }
    let matrix = encode_cases_with_threshold(&corpus.records, &schema, run.cfg.data.high_threshold)?;
    let [no, low, high] = matrix.class_counts();
    Ok(format!("generated {} cases (No {no}, Low {low}, High {high})\n", corpus.records.len()))
}

pub fn train(run: &mut Run) -> Result<String> {
    let data = run.data()?;
    let cfg = run.cfg.train.model.resolve()?;
    let model = fit(&cfg, &data, run.cfg.seed)?;
    let file = ModelFile {
        manifest: run.manifest.header(),
        config: cfg.clone(),
        model,
    };
    run.emit_raw("model.json", &serde_json::to_string(&file)?)?;
    Ok(format!("trained {cfg} on {} cases\n", data.train.n_rows()))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    serde_json::from_str(&read_text(path)?).map_err(|e| anyhow!("{}: not a model file: {e}", path.display()))
}

pub fn evaluate(run: &mut Run) -> Result<String> {
    let data = run.data()?;
    let path = run.cfg.evaluate.model.clone().unwrap_or_else(|| run.out("model.json"));
    let file = load_model(&path)?;
    run.input(&path)?;
    let taus = run.cfg.evaluate.taus.clone();
    let mut rows = Vec::new();
    let preds = file.model.predict(&data.test)?;
    rows.extend(metric_rows(&file.config.key(), &confusion(&preds, data.test.labels())?, &taus)?);
    for rule in rules(&run.cfg.evaluate.rules)? {
        let preds = rule_predictions(&rule, &data)?;
        let key = ModelConfig::Baseline { rule }.key();
        rows.extend(metric_rows(&key, &confusion(&preds, data.test.labels())?, &taus)?);
    }
    let mut csv = String::from("model,metric,value\n");
    let mut text = String::new();
    for r in &rows {
        writeln!(csv, "{},{},{}", r.model, r.metric, r.value)?;
        writeln!(text, "{:<40} {:<24} {:.4}", r.model, r.metric, r.value)?;
    }
    run.emit("evaluate.csv", &csv)?;
    Ok(text)
}

pub fn gridsearch(run: &mut Run) -> Result<String> {
    let data = run.data()?;
    let objective = parse_objective(&run.cfg.gridsearch.objective)?;
    let table = grid_search(&run.cfg.gridsearch.space, &data.train, &data.test, objective, run.cfg.seed)?;
    let table = compare_with_baseline(&rules(&run.cfg.gridsearch.rules)?, &table, &data.test, data.scoring.as_ref())?;
    run.emit("gridsearch.csv", &table.to_csv()?)?;
    let text = format!("objective: {objective}\n{}", table.to_text());
    run.emit("gridsearch.txt", &text)?;
    Ok(text)
}

pub fn crossval(run: &mut Run) -> Result<String> {
    let data = run.data()?;
    let c = run.cfg.crossval.clone();
    let table = cross_validate_space(&c.space, &data.train, c.folds, parse_objective(&c.objective)?, run.cfg.seed)?;
    run.emit("crossval.csv", &table.to_csv()?)?;
    run.emit("crossval-folds.csv", &table.folds_csv()?)?;
    let text = format!("{}-fold cross-validation, objective: {}\n{}", c.folds, table.objective, table.to_text());
    run.emit("crossval.txt", &text)?;
    Ok(text)
}

/// File holding the resource curve for `tau`.
pub fn resource_curve_name(tau: f64) -> String {
    format!("sweep-resource-tau{tau}.csv")
}

pub fn sweep(run: &mut Run) -> Result<String> {
    let data = run.data()?;
    let s = run.cfg.sweep.clone();
    let rule = parse_rule(&s.rule)?;
    let (model_cfg, chosen_by) = match &s.model {
        Some(spec) => (spec.resolve()?, "config".to_string()),
        None => {
            let c = &run.cfg.crossval;
            let table = cross_validate_space(&c.space, &data.train, c.folds, parse_objective(&c.objective)?, run.cfg.seed)?;
            let best = table.best().ok_or_else(|| anyhow!("cross-validation produced no rows"))?;
            (best.config.clone(), format!("{}-fold cross-validation, mean {} {:.4}", c.folds, table.objective, best.mean))
        }
    };
    let f0 = rule_predictions(&rule, &data)?;
    let f1 = fit(&model_cfg, &data, run.cfg.seed)?.predict(&data.test)?;
    let truths = data.test.labels();
    let sweep_seed = seeds::derive(run.cfg.seed, &[seeds::key_of("sweep")]);

    let protection = mu_sweep(&f0, &f1, truths, s.grid_size, MetricId::PoliceProtection, s.n_runs, sweep_seed)?;
    run.emit("sweep-protection.csv", &protection.to_csv()?)?;
    let mut text = String::new();
    writeln!(text, "f0: rule system {rule}")?;
    writeln!(text, "f1: {model_cfg} (chosen by {chosen_by})")?;
    writeln!(text, "test cases: {}", truths.len())?;
    let first = &protection.points[0];
    let last = &protection.points[protection.points.len() - 1];
    writeln!(
        text,
        "police_protection: mu=0 {:.4}, mu=1 {:.4}, slope {:.4}",
        first.mean,
        last.mean,
        protection.slope()
    )?;
    for &tau in &s.taus {
        let curve = mu_sweep(&f0, &f1, truths, s.grid_size, MetricId::PoliceResource { tau }, s.n_runs, sweep_seed)?;
        run.emit(&resource_curve_name(tau), &curve.to_csv()?)?;
        let (a, b) = (curve.points[0].mean, curve.points[curve.points.len() - 1].mean);
        writeln!(text, "police_resource({tau}): mu=0 {a:.4}, mu=1 {b:.4}, difference {:.4}", b - a)?;
    }

    let profile_seed = seeds::derive(run.cfg.seed, &[seeds::key_of("profile")]);
    let mut summary = String::new();
    let mut raw = String::new();
    for (i, &mu) in s.profile_mu.iter().enumerate() {
        let p = resource_profile(&f0, &f1, truths, mu, &s.taus, s.profile_runs, profile_seed)?;
        let (sum_csv, raw_csv) = resource_profile_csv(&p)?;
        // keep a single header per file
        let skip = if i == 0 { 0 } else { 1 };
        summary.extend(sum_csv.lines().skip(skip).map(|l| format!("{l}\n")));
        raw.extend(raw_csv.lines().skip(skip).map(|l| format!("{l}\n")));
    }
    if !s.profile_mu.is_empty() {
        run.emit("profile.csv", &summary)?;
        run.emit("profile-runs.csv", &raw)?;
    }
    run.emit("sweep-summary.txt", &text)?;
    Ok(text)
}

fn smoothing_name(s: Smoothing) -> &'static str {
    match s {
        Smoothing::None => "none",
        Smoothing::Isotonic => "isotonic",
    }
}

fn mean_at(curve: &SweepResult, mu: f64) -> Option<f64> {
    curve.points.iter().find(|p| p.mu == mu).map(|p| p.mean)
}

pub fn decide(run: &mut Run) -> Result<String> {
    let d = run.cfg.decide.clone();
    let r0 = d.r0.ok_or_else(|| anyhow!("invalid config: decide.r0 (resource budget) is required"))?;
    let path = d.curve.clone().unwrap_or_else(|| run.out(&resource_curve_name(d.tau)));
    let curve = SweepResult::from_csv(&read_text(&path)?, &path)?;
    run.input(&path)?;
    if d.curve.is_none() && curve.metric != (MetricId::PoliceResource { tau: d.tau }) {
        bail!("{}: expected police_resource({}) curve, found {}", path.display(), d.tau, curve.metric);
    }
    let mu0 = decide_mu_with(&curve, r0, d.smoothing)?;
    let resource = mean_at(&curve, mu0);
    let protection_path = run.out("sweep-protection.csv");
    let protection = if d.curve.is_none() && protection_path.exists() {
        let p = SweepResult::from_csv(&read_text(&protection_path)?, &protection_path)?;
        run.input(&protection_path)?;
        mean_at(&p, mu0)
    } else {
        None
    };
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let csv = format!(
        "metric,r0,smoothing,mu0,resource_mean,protection_mean\n{},{r0},{},{mu0},{},{}\n",
        curve.metric,
        smoothing_name(d.smoothing),
        fmt(resource),
        fmt(protection)
    );
    run.emit("decide.csv", &csv)?;
    let mut text = format!("mu0 = {mu0} for {} <= {r0}", curve.metric);
    if let Some(r) = resource {
        write!(text, " (mean resource {r:.4}")?;
        if let Some(p) = protection {
            write!(text, ", police protection {p:.4}")?;
        }
        text.push(')');
    }
    text.push('\n');
    run.emit("decide.txt", &text)?;
    Ok(text)
}

pub fn sensitivity(run: &mut Run) -> Result<String> {
    let schema = run.schema()?;
    let records = run.records()?;
    let plan = EvalPlan {
        model: run.cfg.sensitivity.model.resolve()?,
        split: run.cfg.data.split,
        seed: run.cfg.seed,
    };
    let rows = threshold_sensitivity(&records, &schema, &run.cfg.sensitivity.thresholds, &plan)?;
    let csv = sensitivity_csv(&rows)?;
    run.emit("sensitivity.csv", &csv)?;
    let mut text = format!("{}\nthreshold  police_protection  f1_high  n_high\n", plan.model);
    for r in &rows {
        writeln!(text, "{:<9}  {:<17.4}  {:<7.4}  {}", r.threshold, r.police_protection, r.f1_high, r.class_counts[2])?;
    }
    Ok(text)
}
